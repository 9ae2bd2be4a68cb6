import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import split_model
from lnlcoupling.dofs import build_dofmap, dot
from lnlcoupling.elastic_models import (ElasticParams, assemble_bond, assemble_bond_gamma, assemble_elastic_local,
                                        rigid_motion_basis, rigid_motions)
from lnlcoupling.geometry import Label, build_grid, extract_gamma
from lnlcoupling.kernels import KernelSpec, SurfaceKernelSpec
from lnlcoupling.models import assemble_system
from lnlcoupling.scalar_models import assemble_local_stiffness

L, N = int(Label.LOCAL), int(Label.NONLOCAL)


def _energy(K, U):
    return 0.5 * dot(U, K @ U)


def _local_patch(h=0.25, params=ElasticParams()):
    grid = build_grid(2, [(0, 1)] * 2, h, lambda x: np.full(len(x), L))
    dm = build_dofmap(grid, block=2, dirichlet=False)
    return grid, dm, assemble_elastic_local(grid, dm, params)


def test_local_rigid_motions_zero_energy():
    _, dm, K = _local_patch()
    for r in rigid_motion_basis(dm, full=True):
        assert np.abs(K @ r).max() < 1e-12


def test_local_unit_cell_stretch():
    params = ElasticParams(mu=1.3, lam=0.7)
    grid = build_grid(2, [(0, 1)] * 2, 1.0, lambda x: np.full(len(x), L))
    dm = build_dofmap(grid, block=2, dirichlet=False)
    K = assemble_elastic_local(grid, dm, params)
    U = np.zeros((dm.n_full, 2))
    U[:, 0] = dm.node_coords[:, 0]
    assert _energy(K, U.ravel()) == pytest.approx(1.3 + 0.35, rel=1e-14)


def test_local_shear_energy():
    # U = (y, 0): E has off-diagonals 1/2, |E|^2 = 1/2, div 0
    params = ElasticParams(mu=2.0, lam=5.0)
    grid, dm, K = _local_patch(0.5, params)
    U = np.zeros((dm.n_full, 2))
    U[:, 0] = dm.node_coords[:, 1]
    assert _energy(K, U.ravel()) == pytest.approx(2.0 * 0.5, rel=1e-13)


def test_local_1d_scales_scalar_stiffness():
    grid = build_grid(1, [(0, 1)], 0.125, lambda x: np.full(len(x), L))
    params = ElasticParams(mu=0.8, lam=1.9)
    Ke = assemble_elastic_local(grid, build_dofmap(grid, block=1), params)
    Ks = assemble_local_stiffness(grid, build_dofmap(grid))
    assert abs(Ke - (2 * params.mu + params.lam) * Ks).max() < 1e-12


def test_local_requires_vector_block():
    grid = build_grid(2, [(0, 1)] * 2, 0.5, lambda x: np.full(len(x), L))
    with pytest.raises(ValueError):
        assemble_elastic_local(grid, build_dofmap(grid, block=1), ElasticParams())


def test_params_positive():
    with pytest.raises(ValueError):
        ElasticParams(mu=0.0)
    with pytest.raises(ValueError):
        ElasticParams(lam=-1.0)


def _two_cells_2d():
    grid = build_grid(2, [(0, 1), (0, 0.5)], 0.5, lambda x: np.full(len(x), N))
    dm = build_dofmap(grid, block=2, dirichlet=False)
    return grid, dm, assemble_bond(grid, dm, KernelSpec("top_hat", 1.0), exterior=False)


def test_bond_transverse_difference():
    _, dm, K = _two_cells_2d()
    U = np.array([0.0, 1.0, 0.0, -2.0])
    assert _energy(K, U) == 0.0


def test_bond_aligned_difference():
    _, dm, K = _two_cells_2d()
    U = np.array([0.0, 0.0, 3.0, 0.0])
    # both ordered pairs: 1/2 * 2 * d^2 * du^2 * h^4
    assert _energy(K, U) == pytest.approx(0.5 ** 2 * 9.0 * 0.5 ** 4)


def test_bond_1d_pair():
    grid = build_grid(1, [(0, 1)], 0.5, lambda x: np.full(len(x), N))
    dm = build_dofmap(grid, block=1, dirichlet=False)
    K = assemble_bond(grid, dm, KernelSpec("top_hat", 1.0), exterior=False)
    u = np.array([1.0, -1.0])
    assert _energy(K, u) == pytest.approx(0.5 * 1.0 * 0.25 * 4.0 * 0.25 * 2)


def test_bond_rejects_mode():
    grid, dm, _ = _two_cells_2d()
    with pytest.raises(ValueError):
        assemble_bond(grid, dm, KernelSpec("top_hat", 1.0), "source_full", exterior=False)


def test_bond_rigid_motions_nonlocal():
    grid = build_grid(2, [(0, 1)] * 2, 1 / 8, lambda x: np.full(len(x), N))
    dm = build_dofmap(grid, block=2, dirichlet=False)
    K = assemble_bond(grid, dm, KernelSpec("trunc_gaussian", 0.3), exterior=False)
    for r in rigid_motion_basis(dm):
        assert np.abs(K @ r).max() <= 1e-12 * abs(K).max()


def _facet_pair():
    grid = build_grid(2, [(0, 1), (0, 0.5)], 0.5, np.array([[L], [N]]))
    dm = build_dofmap(grid, block=2, dirichlet=False)
    gamma = extract_gamma(grid)
    return grid, dm, gamma


def test_gamma_bond_zero_kernel():
    grid, dm, gamma = _facet_pair()
    assert assemble_bond_gamma(grid, gamma, dm, SurfaceKernelSpec("top_hat", 0.4, 0.0)).nnz == 0


def test_gamma_bond_transverse_and_aligned():
    grid, dm, gamma = _facet_pair()
    assert len(gamma) == 1
    c = 3.0
    K = assemble_bond_gamma(grid, gamma, dm, SurfaceKernelSpec("top_hat", 0.4, c))
    cell = int(dm.cell_node[1])
    U = np.zeros((dm.n_full, 2))
    U[cell, 1] = 1.0
    assert _energy(K, U.ravel()) == 0.0
    U[:] = 0.0
    U[cell, 0] = 1.0
    d, measure, hN = 0.25, 0.5, 0.25
    assert _energy(K, U.ravel()) == pytest.approx(0.5 * c * d ** 2 * measure * hN)


def test_rigid_motion_counts():
    rng = np.random.default_rng(0)
    for dim, count in [(1, 1), (2, 3), (3, 6)]:
        R = rigid_motions(rng.random((7, dim)))
        assert R.shape == (count, 7 * dim)
        assert np.linalg.matrix_rank(R) == count


def test_rigid_motion_2d_fields():
    coords = np.array([[0.2, 0.7], [1.0, -1.0]])
    R = rigid_motions(coords)
    np.testing.assert_array_equal(R[0], [1, 0, 1, 0])
    np.testing.assert_array_equal(R[1], [0, 1, 0, 1])
    np.testing.assert_array_equal(R[2], [-0.7, 0.2, 1.0, 1.0])


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_rigid_motions_are_affine_skew(vals):
    # each field is M x + p with M skew
    coords = np.array(vals).reshape(3, 3)
    for r in rigid_motions(coords):
        U = r.reshape(3, 3)
        X = np.hstack([coords, np.ones((3, 1))])
        # exact for linearly independent points; otherwise skip
        if abs(np.linalg.det(coords - coords.mean(axis=0))) < 1e-3:
            continue
        sol, *_ = np.linalg.lstsq(X, U, rcond=None)
        M = sol[:3].T
        np.testing.assert_allclose(M, -M.T, atol=1e-8)


@pytest.mark.parametrize("kind", ["elastic_source", "elastic_flux"])
def test_block_symmetry(kind):
    s = assemble_system(split_model(kind, 2, 1 / 8, 0.25, kernel="trunc_gaussian"))
    K = s.parts["full"]
    assert abs(K - K.T).max() == 0.0
    Kd = K.toarray()
    n = Kd.shape[0] // 2
    for i in range(0, n, 7):
        for j in range(0, n, 5):
            np.testing.assert_array_equal(Kd[2 * i:2 * i + 2, 2 * j:2 * j + 2],
                                          Kd[2 * j:2 * j + 2, 2 * i:2 * i + 2].T)


@pytest.mark.parametrize("kind", ["elastic_source", "elastic_flux"])
def test_constrained_positive(kind):
    s = assemble_system(split_model(kind, 2, 1 / 8, 0.25))
    ev = np.linalg.eigvalsh(s.A.toarray())
    assert ev.min() > 0


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31))
def test_random_field_energy_nonnegative(seed):
    s = assemble_system(split_model("elastic_flux", 2, 1 / 8, 0.25, exterior=False, dirichlet=False))
    U = np.random.default_rng(seed).standard_normal(s.n)
    assert dot(U, s.A @ U) >= 0.0
    R = rigid_motion_basis(s.dofmap)
    Uc = U - R.T @ np.linalg.lstsq(R.T, U, rcond=None)[0]
    assert dot(Uc, s.A @ Uc) == pytest.approx(dot(U, s.A @ U), rel=1e-9)

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lnlcoupling.dofs import build_dofmap, dot
from lnlcoupling.geometry import Label, build_grid, default_pad, extract_gamma
from lnlcoupling.kernels import ConstantCoefficient, ConstantSource, KernelSpec, SurfaceKernelSpec, exterior_mass
from lnlcoupling.models import ModelConfig, assemble_system, discrete_energy
from lnlcoupling.scalar_models import (apply_exterior_shift, assemble_gamma_coupling, assemble_load,
                                       assemble_local_stiffness, assemble_nonlocal, pair_sets)

L, N, E = int(Label.LOCAL), int(Label.NONLOCAL), int(Label.EXTERIOR)


def _const(label):
    return lambda x: np.full(len(x), label)


def test_local_two_cells():
    grid = build_grid(1, [(0, 1)], 0.5, _const(L))
    dm = build_dofmap(grid)
    K = assemble_local_stiffness(grid, dm)
    assert dm.n == 1
    np.testing.assert_allclose(K[:1, :1].toarray(), [[4.0]])


@pytest.mark.parametrize("dim", [1, 2])
def test_local_neumann_constants(dim):
    grid = build_grid(dim, [(0, 1)] * dim, 0.25, _const(L))
    dm = build_dofmap(grid, dirichlet=False)
    K = assemble_local_stiffness(grid, dm)
    assert np.abs(K @ np.ones(dm.n_full)).max() < 1e-12


def test_local_coefficient_scaling():
    grid = build_grid(2, [(0, 1)] * 2, 0.25, _const(L))
    dm = build_dofmap(grid)
    K1 = assemble_local_stiffness(grid, dm)
    K2 = assemble_local_stiffness(grid, dm, ConstantCoefficient(2.0))
    assert abs(K2 - 2 * K1).max() == 0.0


def test_local_needs_vertices():
    grid = build_grid(1, [(0, 1)], 0.5, _const(N))
    with pytest.raises(ValueError):
        assemble_local_stiffness(grid, build_dofmap(grid))


def test_nonlocal_empty():
    grid = build_grid(1, [(0, 1)], 0.25, _const(L), pad=2)
    K = assemble_nonlocal(grid, build_dofmap(grid), KernelSpec("top_hat", 0.5))
    assert K.nnz == 0


def test_nonlocal_two_cells():
    grid = build_grid(1, [(0, 1)], 0.5, _const(N))
    dm = build_dofmap(grid, dirichlet=False)
    K = assemble_nonlocal(grid, dm, KernelSpec("top_hat", 1.0), exterior=False)
    np.testing.assert_allclose(K.toarray(), [[0.5, -0.5], [-0.5, 0.5]])


def test_nonlocal_padding_error():
    grid = build_grid(1, [(0, 1)], 0.1, _const(N), pad=1)
    with pytest.raises(ValueError, match="padding"):
        assemble_nonlocal(grid, build_dofmap(grid), KernelSpec("top_hat", 0.3))


def _island(h=0.05, rho=0.15):
    # LOCAL island in the middle, more than rho away from the exterior
    grid = build_grid(1, [(0, 1)], h, lambda x: np.where(np.abs(x[:, 0] - 0.5) < 0.2, L, N),
                      pad=default_pad(rho, h))
    return grid, build_dofmap(grid), KernelSpec("top_hat", rho)


def test_source_full_adds_only_exterior_absorption():
    grid, dm, J = _island()
    Ks = assemble_nonlocal(grid, dm, J, "source")
    Kf = assemble_nonlocal(grid, dm, J, "source_full")
    diff = (Kf - Ks)[: dm.n, : dm.n]
    # no LOCAL x exterior reach: the full set only repeats the nonlocal/exterior
    # pairs in the other order, a diagonal absorption term
    assert abs(diff - sp.diags(diff.diagonal())).max() < 1e-15
    mass = np.array([exterior_mass(J, dm.node_coords[k], grid) for k in range(dm.n)]) * grid.h
    np.testing.assert_allclose(diff.diagonal(), mass, atol=1e-15)


def test_source_full_matches_without_exterior():
    grid, dm, J = _island()
    Ks = assemble_nonlocal(grid, dm, J, "source", exterior=False)
    Kf = assemble_nonlocal(grid, dm, J, "source_full", exterior=False)
    assert abs(Kf - Ks).max() == 0.0


def test_source_full_reaches_local_near_exterior():
    grid = build_grid(1, [(0, 1)], 0.05, lambda x: np.where(x[:, 0] < 0.5, L, N), pad=3)
    dm = build_dofmap(grid)
    J = KernelSpec("top_hat", 0.15)
    Ks = assemble_nonlocal(grid, dm, J, "source")
    Kf = assemble_nonlocal(grid, dm, J, "source_full")
    # vertices farther than rho from Gamma see no nonlocal cell
    verts = np.flatnonzero((dm.node_kind[: dm.n] == 0) & (dm.node_coords[: dm.n, 0] < 0.3))
    assert abs(Ks[verts][:, verts]).max() == 0.0
    assert abs(Kf[verts][:, verts]).max() > 0.0


def test_pair_sets_modes():
    grid = build_grid(1, [(0, 1)], 0.25, np.array([L, N, N, L]), pad=1)
    rows, cols = pair_sets(grid, "flux")
    lab = grid.flat_labels
    assert set(lab[rows]) == {N} and set(lab[cols]) == {N, E}


def _one_facet(c=2.0, rho=0.3):
    grid = build_grid(1, [(0, 1)], 0.5, np.array([L, N]))
    dm = build_dofmap(grid)
    gamma = extract_gamma(grid)
    return grid, dm, gamma, SurfaceKernelSpec("top_hat", rho, c)


def test_gamma_zero_kernel():
    grid, dm, gamma, _ = _one_facet()
    assert assemble_gamma_coupling(grid, gamma, dm, SurfaceKernelSpec("top_hat", 0.3, 0.0)).nnz == 0


def test_gamma_single_facet():
    grid, dm, gamma, G = _one_facet()
    assert len(gamma) == 1
    K = assemble_gamma_coupling(grid, gamma, dm, G).toarray()
    v = int(dm.vertex_node[1])
    c = int(dm.cell_node[1])
    block = K[np.ix_([v, c], [v, c])]
    np.testing.assert_allclose(block, 2.0 * 0.5 * np.array([[1, -1], [-1, 1]]))
    assert np.abs(K).sum() == pytest.approx(np.abs(block).sum())
    assert np.abs(K @ np.ones(dm.n_full)).max() < 1e-15


def test_load_constant_and_linear():
    grid = build_grid(1, [(0, 1)], 0.25, _const(N))
    dm = build_dofmap(grid)
    np.testing.assert_allclose(assemble_load(grid, dm, ConstantSource(1.0)), [0.25] * 4)
    np.testing.assert_allclose(assemble_load(grid, dm, lambda x: x[:, 0]), 0.25 * (np.arange(4) + 0.5) * 0.25)
    assert not assemble_load(grid, dm, None).any()


def test_load_rejects_nonfinite():
    grid = build_grid(1, [(0, 1)], 0.25, _const(N))
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        assemble_load(grid, build_dofmap(grid), lambda x: 1.0 / (x[:, 0] - 0.375))


def _six_cells(rho=0.34):
    h = 1 / 6
    grid = build_grid(1, [(0, 1)], h, np.array([L, L, L, N, N, N]), pad=default_pad(rho, h))
    return ModelConfig("scalar_source", grid, kernel=KernelSpec("top_hat", rho))


def test_shift_zero_datum_is_identity():
    model = _six_cells()
    s0 = assemble_system(model.with_(source=ConstantSource(1.0)))
    s1 = assemble_system(model.with_(source=ConstantSource(1.0), datum=ConstantSource(0.0)))
    np.testing.assert_array_equal(s0.b, s1.b)
    assert s0.offset == s1.offset == 0.0


def test_shift_unit_datum_dense_oracle():
    s = assemble_system(_six_cells().with_(datum=ConstantSource(1.0)))
    w = np.linalg.solve(s.A.toarray(), s.b)
    u = s.full_values(w)
    # constants are invisible to every difference term
    np.testing.assert_allclose(u, 1.0, atol=1e-12)
    assert s.energy(w) == pytest.approx(0.0, abs=1e-12)


def test_shift_raises_field_toward_datum():
    # datum only on the exterior: interior solution lies between 0 and 1
    model = _six_cells()
    s = assemble_system(model.with_(datum=lambda x: np.where((x[:, 0] < 0) | (x[:, 0] > 1), 1.0, 0.0)))
    u = s.full_values(np.linalg.solve(s.A.toarray(), s.b))[: s.n]
    nl = s.dofmap.node_kind[: s.n] == 1
    assert np.all(u[nl] > 0) and np.all(u <= 1 + 1e-12)
    assert u[nl].max() == u[nl][np.argmax(s.dofmap.node_coords[: s.n][nl, 0])]


def test_shift_linear_in_datum():
    model = _six_cells()
    dm = model.dofmap()
    K = assemble_system(model).parts["full"]
    b = assemble_load(model.grid, dm, ConstantSource(1.0))
    g = lambda x: np.sin(3 * x[:, 0]) + 2.0
    _, b0, *_ = apply_exterior_shift(K, b, dm)
    _, bp, *_ = apply_exterior_shift(K, b, dm, g)
    _, bm, *_ = apply_exterior_shift(K, b, dm, lambda x: -g(x))
    np.testing.assert_allclose(bp + bm, 2 * b0, atol=1e-14)


@st.composite
def masks(draw):
    dim = draw(st.integers(1, 2))
    n = 12 if dim == 1 else 5
    labels = draw(st.lists(st.sampled_from([L, N, E]), min_size=n ** dim, max_size=n ** dim))
    kind = draw(st.sampled_from(["scalar_source", "scalar_source_full", "scalar_flux"]))
    return dim, n, np.array(labels, dtype=np.int8).reshape((n,) * dim), kind


@settings(max_examples=30)
@given(masks(), st.integers(0, 2 ** 31))
def test_random_masks_symmetric_psd_energy(case, seed):
    dim, n, labels, kind = case
    h, rho = 1.0 / n, 1.5 / n
    grid = build_grid(dim, [(0, 1)] * dim, h, labels, pad=default_pad(rho, h))
    model = ModelConfig(kind, grid, kernel=KernelSpec("trunc_gaussian", rho),
                        gkernel=SurfaceKernelSpec("top_hat", rho), source=ConstantSource(1.0),
                        datum=lambda x: 1.0 + x[:, 0])
    dm = model.dofmap()
    assume(dm.n > 0 and (dm.n_vertex > 0 or not np.any(labels == L)))
    s = assemble_system(model)
    K = s.parts["full"]
    assert abs(K - K.T).max() == 0.0
    ev = np.linalg.eigvalsh(K.toarray())
    assert ev.min() >= -1e-12 * max(1.0, ev.max())
    w = np.random.default_rng(seed).standard_normal(s.n)
    direct = discrete_energy(model, s.full_values(w), s.dofmap)
    assert s.energy(w) == pytest.approx(direct, rel=1e-11, abs=1e-12)
    assert dot(w, s.A @ w) >= -1e-12 * dot(w, w) * max(1.0, ev.max())

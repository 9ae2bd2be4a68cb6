import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import split_model
from lnlcoupling.dofs import QuadraticSystem, build_dofmap, dot
from lnlcoupling.geometry import Label, build_grid
from lnlcoupling.kernels import ConstantSource, KernelSpec, SeparableSine
from lnlcoupling.models import ModelConfig, assemble_system
from lnlcoupling.solvers import (ConvergenceError, _power_difference, coercivity_estimate, conjugate_gradient,
                                 minimize_nonlinear, minimize_quadratic, nonlinear_energy)


def test_cg_identity():
    b = np.zeros(5)
    b[0] = 1.0
    x, it, res, _ = conjugate_gradient(sp.identity(5, format="csr"), b)
    np.testing.assert_array_equal(x, b)
    assert it == 1 and res == 0.0


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31), st.integers(2, 40))
def test_cg_manufactured(seed, n):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = sp.csr_matrix(B @ B.T + n * np.eye(n))
    u = rng.standard_normal(n)
    for precond in ("none", "jacobi"):
        x, _, res, _ = conjugate_gradient(A, A @ u, tol=1e-12, precond=precond)
        assert res <= 1e-12
        np.testing.assert_allclose(x, u, atol=1e-9 * max(1, np.abs(u).max()))


def test_cg_unknown_preconditioner():
    with pytest.raises(ValueError):
        conjugate_gradient(sp.identity(2, format="csr"), np.ones(2), precond="ilu")


def _poisson(h):
    grid = build_grid(1, [(0.0, 1.0)], h, lambda x: np.full(len(x), int(Label.LOCAL)))
    return assemble_system(ModelConfig("scalar_source", grid, source=SeparableSine(np.pi ** 2, (1,))))


@pytest.mark.parametrize("h", [1 / 16, 1 / 32, 1 / 64])
def test_poisson_1d_error(h):
    s = _poisson(h)
    field, rep = minimize_quadratic(s, tol=1e-12)
    x = s.dofmap.node_coords[: s.n, 0]
    assert np.abs(field.values - np.sin(np.pi * x)).max() <= 2 * h * h
    assert rep.converged and rep.iterations > 0


def test_cg_energy_monotone():
    s = assemble_system(split_model("scalar_flux", 2, 1 / 16, 0.25))
    _, rep = minimize_quadratic(s, tol=1e-10)
    hist = np.array(rep.history)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist).max())
    assert rep.energy == pytest.approx(hist[-1], rel=1e-8, abs=1e-14)


def test_quadratic_nonconvergence():
    # a sine load is nearly an eigenvector; a constant one needs many steps
    grid = build_grid(1, [(0.0, 1.0)], 1 / 64, lambda x: np.full(len(x), int(Label.LOCAL)))
    s = assemble_system(ModelConfig("scalar_source", grid, source=ConstantSource(1.0)))
    with pytest.raises(ConvergenceError) as info:
        minimize_quadratic(s, tol=1e-12, max_iter=3)
    assert info.value.report.iterations == 3 and not info.value.report.converged


def test_quadratic_rejects_nan_load():
    s = _poisson(1 / 8)
    bad = QuadraticSystem(A=s.A, b=np.full(s.n, np.nan), M=s.M, dofmap=s.dofmap)
    with pytest.raises(ConvergenceError):
        minimize_quadratic(bad)


def test_coercivity_diagonal():
    rep = coercivity_estimate((sp.diags([1.0, 2.0, 3.0]), np.ones(3)))
    assert rep.lambda_min == pytest.approx(1.0, rel=1e-10)
    assert rep.residual <= 1e-8


def test_coercivity_generalized_pencil():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((30, 30))
    A = B @ B.T + 0.1 * np.eye(30)
    M = rng.uniform(0.5, 2.0, 30)
    dense = sla.eigh(A, np.diag(M), eigvals_only=True)[0]
    rep = coercivity_estimate((A, M))
    assert rep.lambda_min == pytest.approx(dense, rel=1e-6)


@pytest.mark.parametrize("kind", ["scalar_source", "scalar_flux", "elastic_source"])
def test_coercivity_matches_dense(kind):
    s = assemble_system(split_model(kind, 2, 1 / 12, 0.25))
    dense = sla.eigh(s.A.toarray(), np.diag(s.M), eigvals_only=True, subset_by_index=[0, 0])[0]
    rep = coercivity_estimate(s)
    assert rep.lambda_min == pytest.approx(dense, rel=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = rng.standard_normal(s.n)
        assert rep.lambda_min <= dot(v, s.A @ v) / dot(v, s.M * v) * (1 + 1e-12)


def test_coercivity_deflation_skips_constants():
    # 1D nonlocal chain without exterior: constants span the null space
    grid = build_grid(1, [(0, 1)], 1 / 40, lambda x: np.full(len(x), int(Label.NONLOCAL)))
    model = ModelConfig("scalar_source", grid, kernel=KernelSpec("top_hat", 0.1), exterior=False, dirichlet=False)
    s = assemble_system(model)
    assert coercivity_estimate(s).lambda_min <= 1e-8
    dense = sla.eigh(s.A.toarray(), np.diag(s.M), eigvals_only=True, subset_by_index=[1, 1])[0]
    rep = coercivity_estimate(s, deflate=[np.ones(s.n)])
    assert rep.lambda_min == pytest.approx(dense, rel=1e-6)


def test_coercivity_rejects_bad_mass():
    with pytest.raises(ValueError):
        coercivity_estimate((sp.identity(2), np.array([1.0, 0.0])))


@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.lists(st.floats(-1e-3, 1e-3), min_size=20,
                                                                       max_size=20), st.sampled_from([1.0, 2.0, 1.5]))
def test_power_difference(ys, rel, q):
    y = np.array(ys)
    dx = y * np.array(rel[: len(y)])
    exact = (y + dx) ** q - y ** q
    np.testing.assert_allclose(_power_difference(y, dx, q), exact, rtol=1e-9, atol=1e-12)


def _pr_model(dim=1, h=1 / 32, source=None):
    return split_model("scalar_pr", dim, h, 0.2, source=source or ConstantSource(1.0))


def test_nonlinear_zero_source():
    model = _pr_model(source=ConstantSource(0.0))
    field, rep = minimize_nonlinear(model.grid, model.dofmap(), 4, 3, model.kernel, model.source)
    assert not field.values.any() and rep.iterations == 0


@pytest.mark.parametrize("p,r", [(1.0, 2.0), (2.0, 0.5)])
def test_nonlinear_exponents(p, r):
    model = _pr_model()
    with pytest.raises(ValueError):
        minimize_nonlinear(model.grid, model.dofmap(), p, r, model.kernel, model.source)


def test_nonlinear_quadratic_agrees():
    model = _pr_model(2, 1 / 8)
    s = assemble_system(model)
    uq, _ = minimize_quadratic(s, tol=1e-13)
    un, _ = minimize_nonlinear(model.grid, s.dofmap, 2, 2, model.kernel, model.source, tol=1e-12)
    d = un.values - uq.values
    assert np.sqrt(dot(d, s.M * d)) <= 1e-8


def test_nonlinear_energy_matches_quadratic():
    model = _pr_model()
    s = assemble_system(model)
    E = nonlinear_energy(model.grid, s.dofmap, 2, 2, model.kernel, model.source)
    u = np.random.default_rng(5).standard_normal(s.n)
    assert E(u) == pytest.approx(s.energy(u), rel=1e-12)
    np.testing.assert_allclose(E.gradient(u), s.gradient(u), rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("p,r", [(4.0, 2.0), (3.0, 1.5), (1.5, 3.0)])
def test_nonlinear_descent(p, r):
    model = _pr_model(h=1 / 16)
    dm = model.dofmap()
    field, rep = minimize_nonlinear(model.grid, dm, p, r, model.kernel, model.source, tol=1e-8)
    assert rep.converged and rep.residual <= 1e-8
    assert all(d < 0 for d in rep.decrements)
    assert len(rep.history) == len(rep.decrements) + 1
    E = nonlinear_energy(model.grid, dm, p, r, model.kernel, model.source)
    assert rep.energy == pytest.approx(rep.history[-1], rel=1e-9)
    # the minimizer beats small perturbations
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert E(field.values + 1e-3 * rng.standard_normal(dm.n)) >= E(field.values)


def test_nonlinear_deterministic():
    model = _pr_model(2, 1 / 8)
    dm = model.dofmap()
    a, _ = minimize_nonlinear(model.grid, dm, 4, 2, model.kernel, model.source, tol=1e-8)
    b, _ = minimize_nonlinear(model.grid, dm, 4, 2, model.kernel, model.source, tol=1e-8)
    assert a.values.tobytes() == b.values.tobytes()


def test_nonlinear_budget():
    model = _pr_model()
    with pytest.raises(ConvergenceError) as info:
        minimize_nonlinear(model.grid, model.dofmap(), 4, 2, model.kernel, model.source, tol=1e-12, max_iter=5)
    assert info.value.report.iterations == 5


def test_nonlinear_unknown_preconditioner():
    model = _pr_model()
    with pytest.raises(ValueError):
        minimize_nonlinear(model.grid, model.dofmap(), 4, 2, model.kernel, model.source, precond="ilu")


def test_nonlinear_pure_local():
    grid = build_grid(1, [(0, 1)], 1 / 16, lambda x: np.full(len(x), int(Label.LOCAL)))
    dm = build_dofmap(grid)
    field, rep = minimize_nonlinear(grid, dm, 3, 2, None, ConstantSource(1.0), tol=1e-9)
    u = field.values
    # symmetric data gives a symmetric minimizer
    np.testing.assert_allclose(u, u[::-1], atol=1e-7)

"""Euler-Lagrange residuals, finite-difference gradient checks and null spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dofs import QuadraticSystem, dot, facet_pairs, norm
from .geometry import Label
from .models import ModelConfig
from .solvers import coercivity_estimate


@dataclass(frozen=True)
class Record:
    """One verification outcome: ``value <= threshold`` unless ``passed`` says otherwise."""

    name: str
    value: float
    threshold: float
    passed: bool

    @classmethod
    def upper(cls, name: str, value: float, threshold: float) -> "Record":
        return cls(name, float(value), float(threshold), bool(value <= threshold))


def _energy_and_gradient(target):
    if isinstance(target, QuadraticSystem):
        return target.energy, target.gradient
    return target, target.gradient


def gradient_check(target, u: np.ndarray, probes: int = 20, h_fd: float = 1e-5, seed: int = 0) -> float:
    """Max relative gap between the analytic and central-difference directional derivatives.

    ``target`` is a QuadraticSystem or any callable energy with a
    ``gradient`` method.  Directions are random unit vectors.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    energy, grad = _energy_and_gradient(target)
    u = np.asarray(u, dtype=float)
    g = grad(u)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        d = rng.standard_normal(len(u))
        d /= norm(d)
        fd = (energy(u + h_fd * d) - energy(u - h_fd * d)) / (2.0 * h_fd)
        an = dot(g, d)
        scale = max(abs(an), abs(fd))
        if scale > 0:
            worst = max(worst, abs(fd - an) / scale)
    return worst


# ---------------------------------------------------------------- E-L residuals


def dof_regions(model: ModelConfig, system: QuadraticSystem) -> dict[str, np.ndarray]:
    """Active dof indices grouped by where their Euler-Lagrange equation lives.

    ``local`` are vertices inside the local region, ``boundary`` vertices on
    its boundary inside the domain (touching a NONLOCAL cell), ``gamma`` the
    subset lying on interface facets and ``nonlocal`` the cell unknowns.
    """
    dm = system.dofmap
    grid = model.grid
    lab = grid.flat_labels
    vnodes = np.arange(dm.n_vertex)
    verts = dm.node_item[vnodes]
    cells = grid.vertex_cells(verts)
    touch_nl = np.any((cells >= 0) & (lab[np.maximum(cells, 0)] == Label.NONLOCAL), axis=1)
    gamma_v = np.zeros(len(vnodes), bool)
    gam = model.gamma
    if len(gam):
        on = dm.vertex_node[np.unique(gam.vertices)]
        on = on[(on >= 0) & (on < dm.n_vertex)]
        gamma_v[on] = True
    groups = {
        "local": vnodes[~touch_nl],
        "boundary": vnodes[touch_nl],
        "gamma": vnodes[gamma_v],
        "nonlocal": np.arange(dm.n_vertex, dm.n),
    }
    return {k: dm.expand(v) for k, v in groups.items()}


def flux_balance(model: ModelConfig, system: QuadraticSystem, w: np.ndarray,
                 margin: float = 0.0) -> np.ndarray:
    """Strong-form residual of the scalar flux condition at interface facets.

    ``(trace - opposite face)/h - sum_x G(z, x) (u(x) - u(z)) h^N``: the
    one-sided normal derivative of the local field against the surface
    coupling integral.  Consistent to O(h) away from the points where the
    interface meets the outer boundary; facets whose centers lie within
    ``margin`` of that boundary are skipped.
    """
    if model.kind.is_elastic or not model.kind.is_flux:
        raise ValueError("flux balance is defined for the scalar flux model")
    grid, dm, gam = model.grid, system.dofmap, model.gamma
    if len(gam) == 0:
        return np.zeros(0)
    u = system.full_values(w)
    trace = u[dm.vertex_node[gam.vertices]].mean(axis=1)
    verts = grid.cell_vertices(gam.local_cell)
    bits = np.array(list(np.ndindex(*(2,) * grid.dim)))
    axis = np.argmax(np.abs(gam.normal), axis=1)
    side = (gam.normal[np.arange(len(gam)), axis] > 0).astype(int)
    opposite = np.array([u[dm.vertex_node[verts[k][bits[:, axis[k]] != side[k]]]].mean()
                         for k in range(len(gam))])
    dn = (trace - opposite) / grid.h
    coupling = np.zeros(len(gam))
    if model.gkernel is not None:
        f, c, d = facet_pairs(grid, gam, model.gkernel.rho)
        G = model.gkernel.radial(np.linalg.norm(d, axis=1))
        np.add.at(coupling, f, G * (u[dm.cell_node[c]] - trace[f]) * grid.h ** grid.dim)
    res = dn - coupling
    if margin > 0 and grid.dim > 1:
        lo = np.array([iv[0] for iv in grid.bbox])
        hi = np.array([iv[1] for iv in grid.bbox])
        # distance along the facet's tangential axes only
        gap = np.minimum(gam.center - lo, hi - gam.center)
        gap[np.arange(len(gam)), axis] = np.inf
        res = res[gap.min(axis=1) >= margin]
    return res


def el_residual(model: ModelConfig, system: QuadraticSystem, w: np.ndarray,
                margin: float = 0.0) -> dict[str, dict[str, float]]:
    """Per-region Euler-Lagrange residual norms of ``w``.

    ``weak`` rows are ``A w - b`` divided by ``max(||b||, 1)``; ``strong`` rows
    divide each row by its lumped mass, giving the pointwise equation.  The
    scalar flux model adds the interface flux balance under ``flux``
    (see :func:`flux_balance` for ``margin``).
    """
    w = np.asarray(w, dtype=float)
    if len(w) != system.n:
        raise ValueError(f"field has {len(w)} entries, system has {system.n}")
    r = system.A @ w - system.b
    scale = max(norm(system.b), 1.0)
    strong = r / system.M
    out: dict[str, dict[str, float]] = {}
    for name, idx in dof_regions(model, system).items():
        if len(idx) == 0:
            continue
        out[name] = {
            "weak_max": float(np.max(np.abs(r[idx]))) / scale,
            "weak_l2": norm(r[idx]) / scale,
            "strong_max": float(np.max(np.abs(strong[idx]))),
        }
    out["all"] = {"weak_max": float(np.max(np.abs(r), initial=0.0)) / scale, "weak_l2": norm(r) / scale,
                  "strong_max": float(np.max(np.abs(strong), initial=0.0))}
    if model.kind.is_flux and not model.kind.is_elastic and len(model.gamma):
        fb = flux_balance(model, system, w, margin)
        h = model.grid.h
        out["flux"] = {"max": float(np.max(np.abs(fb), initial=0.0)),
                       "l2": float(np.sqrt(np.sum(fb * fb) * h ** (model.grid.dim - 1)))}
    return out


# ---------------------------------------------------------------- null spaces


def _span_residual(V: np.ndarray, M: np.ndarray, expected: np.ndarray) -> float:
    """Largest relative M-norm distance from an expected vector to span(V); V is M-orthonormal."""
    worst = 0.0
    for e in expected:
        coef = V.T @ (M * e)
        rest = e - V @ coef
        worst = max(worst, np.sqrt(dot(rest, M * rest) / dot(e, M * e)))
    return worst


def nullspace_characterization(A, M: np.ndarray, expected=None, tol: float = 1e-10,
                               dense_limit: int = 4000, method: str = "auto",
                               match_tol: float = 1e-8, seed: int = 0) -> tuple[int, bool]:
    """Count eigenvalues of (A, M) below ``tol`` and compare their span with ``expected``.

    ``matched`` holds when the count equals the rank of ``expected`` and every
    expected vector lies in the computed span to ``match_tol`` (relative, in
    the M-norm).  ``method`` is ``dense``, ``iterative`` or ``auto``.
    """
    M = np.asarray(M, dtype=float)
    n = len(M)
    if method == "auto":
        method = "dense" if n <= dense_limit else "iterative"
    if method == "dense":
        if n > dense_limit:
            raise ValueError(f"dense eigensolve refused for n = {n} > {dense_limit}")
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        lam, V = sla.eigh(Ad, np.diag(M))
        V = V[:, lam < tol]
    elif method == "iterative":
        found: list[np.ndarray] = []
        while len(found) < n:
            rep = coercivity_estimate((A, M), eig_tol=1e-2 * tol, deflate=found, seed=seed + len(found))
            if rep.lambda_min >= tol:
                break
            found.append(rep.vector)
        V = np.array(found).T if found else np.zeros((n, 0))
        # re-orthonormalize in the M inner product
        if V.shape[1]:
            L = np.linalg.cholesky(V.T @ (M[:, None] * V))
            V = np.linalg.solve(L, V.T).T
    else:
        raise ValueError(f"unknown method {method!r}")
    dim = V.shape[1]
    if expected is None:
        return dim, True
    E = np.atleast_2d(np.asarray(expected, dtype=float))
    rank = np.linalg.matrix_rank(E * np.sqrt(M)[None, :])
    matched = dim == rank and (dim == 0 or _span_residual(V, M, E) <= match_tol)
    return dim, bool(matched)

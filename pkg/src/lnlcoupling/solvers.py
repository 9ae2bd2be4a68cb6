"""Minimizers for the discrete energies and coercivity estimates."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dofs import DofMap, Field, QuadraticSystem, cell_interpolation, dot, gauss_gradient, interaction_pairs, norm
from .geometry import GridDomain
from .kernels import KernelSpec
from .scalar_models import NonlocalMode, assemble_load, pair_sets


class ConvergenceError(RuntimeError):
    """Raised when an iteration exhausts its budget or produces NaN."""

    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    residual: float
    energy: float
    wall_time: float
    converged: bool
    history: list = field(default_factory=list, repr=False)
    decrements: list = field(default_factory=list, repr=False)


@dataclass
class CoercivityReport:
    lambda_min: float
    iterations: int
    residual: float
    vector: np.ndarray = field(repr=False, default=None)


def _relative_residual(r: np.ndarray, b: np.ndarray) -> float:
    return norm(r) / max(norm(b), 1.0)


def conjugate_gradient(A, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None,
                       x0: np.ndarray | None = None, precond: str = "none",
                       track_energy: bool = False) -> tuple[np.ndarray, int, float, list]:
    """CG for SPD ``A``; stops on the true relative residual ||Ax - b|| / max(||b||, 1).

    Returns ``(x, iterations, residual, energy_history)``.
    """
    n = len(b)
    max_iter = 10 * n + 100 if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if precond == "jacobi":
        diag = np.asarray(A.diagonal(), dtype=float)
        inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    elif precond == "none":
        inv = None
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")

    bnorm = max(norm(b), 1.0)
    history: list[float] = []
    it = 0
    r = b - A @ x
    res = norm(r) / bnorm
    while res > tol and it < max_iter:
        # inner CG on the recurrence residual; the outer loop rechecks the true residual
        z = r if inv is None else inv * r
        p = z.copy()
        rz = dot(r, z)
        breakdown = False
        while it < max_iter:
            Ap = A @ p
            pAp = dot(p, Ap)
            if not math.isfinite(pAp):
                raise ConvergenceError("NaN encountered in CG")
            if pAp <= 0:
                breakdown = True
                break
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if track_energy:
                # 1/2 x.Ax - b.x with Ax = b - r
                history.append(-0.5 * (dot(b, x) + dot(r, x)))
            if norm(r) / bnorm <= 0.5 * tol:
                break
            z = r if inv is None else inv * r
            rz_new = dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        new_res = norm(r) / bnorm
        if not math.isfinite(new_res):
            raise ConvergenceError("NaN encountered in CG")
        stalled = breakdown and new_res >= res
        res = new_res
        if stalled:
            break
    return x, it, res, history


def minimize_quadratic(system: QuadraticSystem, tol: float = 1e-10, max_iter: int | None = None,
                       precond: str = "none", x0: np.ndarray | None = None) -> tuple[Field, SolveReport]:
    """Minimize ``1/2 w.A w - b.w + offset`` by conjugate gradients."""
    t0 = time.perf_counter()
    if not np.all(np.isfinite(system.b)):
        raise ConvergenceError("load vector is not finite")
    x, it, res, hist = conjugate_gradient(system.A, system.b, tol, max_iter, x0, precond, track_energy=True)
    hist = [e + system.offset for e in hist]
    report = SolveReport(iterations=it, residual=res, energy=system.energy(x),
                         wall_time=time.perf_counter() - t0, converged=res <= tol, history=hist)
    if not report.converged:
        raise ConvergenceError(f"CG did not reach tol={tol} in {it} iterations (residual {res:.3e})", report)
    return Field(x, system.dofmap), report


# ---------------------------------------------------------------- eigenvalues


class _Shifted:
    def __init__(self, A, M: np.ndarray, s: float):
        self.A, self.M, self.s = A, M, s

    def __matmul__(self, x):
        return self.A @ x + self.s * (self.M * x)

    def diagonal(self):
        return self.A.diagonal() + self.s * self.M


def _m_orthogonalize(v: np.ndarray, basis: list[np.ndarray], M: np.ndarray) -> np.ndarray:
    for q in basis:
        v = v - dot(q, M * v) * q
    return v


def _estimate_lambda_max(A, M: np.ndarray, rng: np.random.Generator, steps: int = 30) -> float:
    v = rng.standard_normal(len(M))
    lam = 0.0
    for _ in range(steps):
        w = (A @ v) / M
        lam = norm(w)
        if lam == 0:
            return 0.0
        v = w / lam
    return dot(v, A @ v) / dot(v, M * v)


def coercivity_estimate(system: QuadraticSystem | tuple, eig_tol: float = 1e-8, max_iter: int = 500,
                        deflate: list[np.ndarray] | None = None, seed: int = 0,
                        shift: float | None = None, inner_tol: float = 1e-13) -> CoercivityReport:
    """Smallest eigenvalue of the pencil (A, M) by shifted inverse iteration.

    Each step solves ``(A + s M) y = M v`` with CG.  ``s`` defaults to a tiny
    fraction of the largest eigenvalue so singular ``A`` still yields an SPD
    inner system; the eigenvalue is the Rayleigh quotient.  ``deflate`` vectors
    are removed in the M-inner product.  Stops when
    ``||A v - lam M v|| / ||M v|| <= eig_tol``.
    """
    if isinstance(system, QuadraticSystem):
        A, M = system.A, np.asarray(system.M, dtype=float)
    else:
        A, M = system
        A = sp.csr_matrix(A)
        M = np.asarray(M, dtype=float)
    if np.any(M <= 0):
        raise ValueError("mass matrix must be positive")
    n = len(M)
    rng = np.random.default_rng(seed)
    lam_max = _estimate_lambda_max(A, M, rng)
    scale = max(lam_max, 1e-300)
    # small enough not to mask eigenvalues near zero; the inner CG copes with
    # the resulting conditioning because the low end of the spectrum is clustered
    s = 1e-10 * scale if shift is None else shift
    op = _Shifted(A, M, s)

    basis: list[np.ndarray] = []
    for q in deflate or []:
        q = _m_orthogonalize(np.asarray(q, dtype=float), basis, M)
        nq = math.sqrt(dot(q, M * q))
        if nq > 0:
            basis.append(q / nq)

    v = _m_orthogonalize(rng.standard_normal(n), basis, M)
    v /= math.sqrt(dot(v, M * v))
    lam, res, it = math.inf, math.inf, 0
    y = None
    while it < max_iter:
        it += 1
        rhs = M * v
        x0 = None if y is None or not math.isfinite(lam) else v / (lam + s)
        y, _, _, _ = conjugate_gradient(op, rhs, tol=inner_tol, max_iter=20 * n + 100, x0=x0, precond="jacobi")
        y = _m_orthogonalize(y, basis, M)
        ny = math.sqrt(dot(y, M * y))
        if not math.isfinite(ny) or ny == 0:
            raise ConvergenceError("inverse iteration broke down")
        v = y / ny
        Av = A @ v
        # roundoff can push the quotient of a PSD pencil slightly below zero
        lam = max(dot(v, Av), 0.0)
        Mv = M * v
        res = norm(Av - lam * Mv) / norm(Mv)
        if res <= eig_tol:
            break
    return CoercivityReport(lambda_min=lam, iterations=it, residual=res, vector=v)


# ---------------------------------------------------------------- nonlinear


def _power_difference(y: np.ndarray, dx: np.ndarray, q: float) -> np.ndarray:
    """(y + dx)**q - y**q for y >= 0, accurate when dx is tiny relative to y."""
    out = np.maximum(dx, 0.0) ** q
    pos = y > 0
    yp, dp = y[pos], dx[pos]
    with np.errstate(divide="ignore"):
        # log1p(-1) = -inf gives the exact -y**q
        out[pos] = yp ** q * np.expm1(q * np.log1p(np.maximum(dp / yp, -1.0)))
    return out


@dataclass(frozen=True, eq=False)
class NonlinearEnergy:
    """E(u) = sum_q w_q |grad u|^p / p + 1/r sum_ij J_ij |u_j - u_i|^r - f.u.

    The local term uses 2**dim Gauss points per cell (exact for p = 2); the
    nonlocal pairs run over Omega_nl x Omega.  ``u`` holds the active dofs;
    fixed dofs are zero.
    """

    p: float
    r: float
    grad_ops: tuple
    qweights: np.ndarray
    D: sp.csr_matrix
    pweights: np.ndarray
    b: np.ndarray
    n: int

    def _full(self, u):
        out = np.zeros(self.D.shape[1])
        out[: self.n] = u
        return out

    def __call__(self, u: np.ndarray) -> float:
        uf = self._full(u)
        total = 0.0
        if len(self.qweights):
            g2 = sum((op @ uf) ** 2 for op in self.grad_ops)
            total += float(np.sum(self.qweights * g2 ** (0.5 * self.p))) / self.p
        if len(self.pweights):
            d = self.D @ uf
            total += float(np.sum(self.pweights * np.abs(d) ** self.r)) / self.r
        return total - dot(self.b, u)

    def decrease(self, u: np.ndarray, d: np.ndarray, t: float) -> float:
        """E(u - t d) - E(u) without cancelling the two large energies."""
        uf, df = self._full(u), self._full(d)
        total = 0.0
        if len(self.qweights):
            g = [op @ uf for op in self.grad_ops]
            dg = [-t * (op @ df) for op in self.grad_ops]
            y = sum(a * a for a in g)
            dx = sum(b * (2 * a + b) for a, b in zip(g, dg))
            total += float(np.sum(self.qweights * _power_difference(y, dx, 0.5 * self.p))) / self.p
        if len(self.pweights):
            a = self.D @ uf
            b = -t * (self.D @ df)
            total += float(np.sum(self.pweights * _power_difference(a * a, b * (2 * a + b), 0.5 * self.r))) / self.r
        return total + t * dot(self.b, d)

    def metric(self) -> np.ndarray:
        """Diagonal of the p = r = 2 Hessian; a fixed scaling for descent directions."""
        diag = np.zeros(self.D.shape[1])
        for op in self.grad_ops:
            diag += op.T.multiply(op.T) @ self.qweights
        if len(self.pweights):
            diag += self.D.T.multiply(self.D.T) @ self.pweights
        diag = diag[: self.n]
        return np.where(diag > 0, diag, 1.0)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        uf = self._full(u)
        out = np.zeros_like(uf)
        if len(self.qweights):
            gs = [op @ uf for op in self.grad_ops]
            mag = np.sqrt(sum(g * g for g in gs))
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(mag > 0, mag ** (self.p - 2.0), 0.0) if self.p < 2 else mag ** (self.p - 2.0)
            for op, g in zip(self.grad_ops, gs):
                out += op.T @ (self.qweights * fac * g)
        if len(self.pweights):
            d = self.D @ uf
            out += self.D.T @ (self.pweights * np.sign(d) * np.abs(d) ** (self.r - 1.0))
        return out[: self.n] - self.b


def nonlinear_energy(grid: GridDomain, dofmap: DofMap, p: float, r: float, J: KernelSpec | None, f) -> NonlinearEnergy:
    if not (p > 1 and r > 1):
        raise ValueError(f"need p, r > 1, got p={p}, r={r}")
    gg = gauss_gradient(dofmap)
    size = dofmap.n_full
    if J is not None:
        rows, cols = pair_sets(grid, NonlocalMode.OMEGA)
        pairs = interaction_pairs(grid, J.rho, rows, cols)
        P = cell_interpolation(dofmap)
        D = (P[pairs.j] - P[pairs.i]).tocsr()
        w = J.radial(np.linalg.norm(pairs.disp, axis=1), grid.dim) * grid.h ** (2 * grid.dim)
    else:
        D = sp.csr_matrix((0, size))
        w = np.zeros(0)
    b = assemble_load(grid, dofmap, f)[: dofmap.n]
    return NonlinearEnergy(p, r, gg.ops, gg.weights, D, w, b, dofmap.n)


def minimize_nonlinear(grid: GridDomain, dofmap: DofMap, p: float, r: float, J: KernelSpec | None, f,
                       tol: float = 1e-8, max_iter: int = 200000, x0: np.ndarray | None = None,
                       armijo: float = 1e-4, precond: str = "jacobi") -> tuple[Field, SolveReport]:
    """Gradient descent with halving backtracking on the p,r energy.

    With ``precond="jacobi"`` the direction is the gradient scaled by the
    inverse diagonal of the p = r = 2 Hessian (steepest descent in that fixed
    metric); ``"none"`` uses the plain gradient.  Stops when the Euclidean
    gradient norm is <= ``tol``.  The trial step starts from twice the last
    accepted step.  Trial energies are compared through
    :meth:`NonlinearEnergy.decrease` so sufficient decrease stays meaningful
    below the round-off of E itself; ``report.decrements`` holds the accepted
    changes and ``report.history`` their running sum from E(x0).
    """
    t0 = time.perf_counter()
    energy = nonlinear_energy(grid, dofmap, p, r, J, f)
    if precond == "jacobi":
        inv = 1.0 / energy.metric()
    elif precond == "none":
        inv = np.ones(dofmap.n)
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")
    u = np.zeros(dofmap.n) if x0 is None else np.array(x0, dtype=float)
    e = energy(u)
    g = energy.gradient(u)
    gnorm = norm(g)
    history = [e]
    decrements: list[float] = []
    step = 1.0
    it = 0
    while gnorm > tol and it < max_iter:
        it += 1
        d = inv * g
        gd = dot(g, d)
        t = 2.0 * step
        while True:
            de = energy.decrease(u, d, t)
            if math.isfinite(de) and de <= -armijo * t * gd and de < 0:
                break
            t *= 0.5
            if t < 1e-300 or t * norm(d) <= 1e-17 * max(norm(u), 1e-300):
                raise ConvergenceError(
                    f"line search failed at gradient {gnorm:.3e}",
                    SolveReport(it, gnorm, e, time.perf_counter() - t0, False, history, decrements))
        u = u - t * d
        step = t
        e = e + de
        decrements.append(de)
        history.append(e)
        g = energy.gradient(u)
        gnorm = norm(g)
        if not math.isfinite(gnorm):
            raise ConvergenceError("NaN encountered in descent")
    report = SolveReport(iterations=it, residual=gnorm, energy=energy(u),
                         wall_time=time.perf_counter() - t0, converged=gnorm <= tol,
                         history=history, decrements=decrements)
    if not report.converged:
        raise ConvergenceError(f"descent did not reach tol={tol} in {it} iterations (gradient {gnorm:.3e})", report)
    return Field(u, dofmap), report

"""Volumetric and surface kernels, coefficient presets and data presets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import TIE_RTOL, GridDomain, Label


class KernelKind(str, enum.Enum):
    TOP_HAT = "top_hat"
    TRUNC_GAUSSIAN = "trunc_gaussian"
    TRUNC_FRACTIONAL = "trunc_fractional"


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel J with compact support of radius ``rho``.

    The connectivity scale paired with a kernel is ``delta = rho / 2`` so that
    J is bounded below on the ball of radius 2*delta.
    """

    kind: KernelKind = KernelKind.TOP_HAT
    rho: float = 1.0
    c: float = 1.0
    s: float | None = None
    eps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not self.rho > 0:
            raise ValueError(f"kernel horizon must be positive, got {self.rho}")
        if not self.c > 0:
            raise ValueError(f"kernel amplitude must be positive, got {self.c}")
        if self.kind is KernelKind.TRUNC_FRACTIONAL:
            if self.s is None or not 0 < self.s < 1:
                raise ValueError("TRUNC_FRACTIONAL needs s in (0, 1)")
            if self.eps is None or not self.eps > 0:
                raise ValueError("TRUNC_FRACTIONAL needs eps > 0")

    @property
    def delta(self) -> float:
        return 0.5 * self.rho

    def radial(self, r: np.ndarray, dim: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = r <= self.rho * (1.0 + TIE_RTOL)
        if self.kind is KernelKind.TOP_HAT:
            val = np.full_like(r, self.c)
        elif self.kind is KernelKind.TRUNC_GAUSSIAN:
            val = self.c * np.exp(-(r / self.rho) ** 2)
        else:
            val = self.c / (r + self.eps) ** (dim + 2.0 * self.s)
        return np.where(inside, val, 0.0)


class SurfaceKernelKind(str, enum.Enum):
    TOP_HAT = "top_hat"
    TRUNC_GAUSSIAN = "trunc_gaussian"


@dataclass(frozen=True)
class SurfaceKernelSpec:
    """Kernel G(z, x) between a point z of Gamma and a nonlocal point x."""

    kind: SurfaceKernelKind = SurfaceKernelKind.TOP_HAT
    rho: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SurfaceKernelKind(self.kind))
        if not self.rho > 0:
            raise ValueError(f"surface kernel horizon must be positive, got {self.rho}")
        if self.c < 0:
            raise ValueError(f"surface kernel amplitude must be non-negative, got {self.c}")

    def radial(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inside = r <= self.rho * (1.0 + TIE_RTOL)
        if self.kind is SurfaceKernelKind.TOP_HAT:
            val = np.full_like(r, self.c)
        else:
            val = self.c * np.exp(-(r / self.rho) ** 2)
        return np.where(inside, val, 0.0)


def _norm(z, dim: int | None) -> tuple[np.ndarray, int]:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return np.abs(z), dim or 1
    if dim is None:
        dim = z.shape[-1]
        return np.linalg.norm(z, axis=-1), dim
    if dim == 1 and z.shape[-1] != 1:
        return np.abs(z), 1
    return np.linalg.norm(z, axis=-1), dim


def eval_kernel(spec: KernelSpec, z, dim: int | None = None):
    """J(z) for a displacement ``z`` (scalar, vector, or stack of vectors)."""
    r, dim = _norm(z, dim)
    out = spec.radial(r, dim)
    return float(out) if np.ndim(out) == 0 else out


def eval_surface_kernel(spec: SurfaceKernelSpec, z, x):
    r, _ = _norm(np.asarray(x, dtype=float) - np.asarray(z, dtype=float), None)
    out = spec.radial(r)
    return float(out) if np.ndim(out) == 0 else out


def check_J1(spec: KernelSpec, delta: float, samples: int = 64, dim: int = 1) -> tuple[bool, float]:
    """Sample J on a uniform radial grid of [0, 2*delta]; J1 holds if the minimum is positive."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    r = np.linspace(0.0, 2.0 * delta, max(samples, 2))
    c_est = float(np.min(spec.radial(r, dim)))
    return c_est > 0, c_est


def check_G1(spec: SurfaceKernelSpec, delta: float, samples: int = 64) -> tuple[bool, float]:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    r = np.linspace(0.0, 2.0 * delta, max(samples, 2))
    c_est = float(np.min(spec.radial(r)))
    return c_est > 0, c_est


def exterior_mass(spec: KernelSpec, x, grid: GridDomain, region: Label = Label.EXTERIOR) -> float:
    """Midpoint value of the integral of J(x - y) over the cells carrying ``region``."""
    if grid.pad * grid.h < spec.rho * (1.0 - TIE_RTOL):
        raise ValueError(
            f"insufficient padding: pad*h = {grid.pad * grid.h} < rho = {spec.rho}"
        )
    cells = grid.cells_with(Label(region))
    if len(cells) == 0:
        return 0.0
    z = np.atleast_1d(np.asarray(x, dtype=float)) - grid.centers(cells)
    vals = spec.radial(np.linalg.norm(z, axis=1), grid.dim)
    return float(np.sum(vals) * grid.h ** grid.dim)


# ---------------------------------------------------------------- coefficients


class Coefficient:
    """Positive bounded modulation: a(x) for the local part, b(x, y) for pairs."""

    low: float
    high: float

    def point(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pair(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return 0.5 * (self.point(x) + self.point(y))


@dataclass(frozen=True)
class ConstantCoefficient(Coefficient):
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("coefficient must be positive")

    @property
    def low(self):
        return self.value

    @property
    def high(self):
        return self.value

    def point(self, x):
        return np.full(len(x), self.value)

    def pair(self, x, y):
        return np.full(len(x), self.value)


@dataclass(frozen=True)
class PiecewiseCoefficient(Coefficient):
    """``below`` for x[axis] < cut, ``above`` otherwise; pairs take the mean."""

    below: float = 1.0
    above: float = 1.0
    axis: int = 0
    cut: float = 0.5

    def __post_init__(self):
        if not (self.below > 0 and self.above > 0):
            raise ValueError("coefficient values must be positive")

    @property
    def low(self):
        return min(self.below, self.above)

    @property
    def high(self):
        return max(self.below, self.above)

    def point(self, x):
        return np.where(np.asarray(x)[:, self.axis] < self.cut, self.below, self.above)


@dataclass(frozen=True)
class RadialCoefficient(Coefficient):
    """Gaussian bump between ``low`` and ``high`` centered at ``center``."""

    low: float = 1.0
    high: float = 2.0
    center: tuple = (0.5,)
    width: float = 0.25

    def __post_init__(self):
        if not (0 < self.low <= self.high):
            raise ValueError("need 0 < low <= high")

    def point(self, x):
        d2 = np.sum((np.asarray(x) - np.asarray(self.center, dtype=float)) ** 2, axis=1)
        return self.low + (self.high - self.low) * np.exp(-d2 / self.width ** 2)


# ---------------------------------------------------------------- data presets


@dataclass(frozen=True)
class ConstantSource:
    value: float = 1.0

    def __call__(self, x):
        return np.full(len(x), float(self.value))


@dataclass(frozen=True)
class GaussianBump:
    amp: float = 1.0
    center: tuple = (0.5,)
    width: float = 0.1

    def __call__(self, x):
        d2 = np.sum((np.asarray(x) - np.asarray(self.center, dtype=float)) ** 2, axis=1)
        return self.amp * np.exp(-d2 / self.width ** 2)


@dataclass(frozen=True)
class SeparableSine:
    """amp * prod_k sin(k_k * pi * x_k)."""

    amp: float = 1.0
    k: tuple = (1,)

    def __call__(self, x):
        x = np.asarray(x)
        out = np.full(len(x), float(self.amp))
        for d in range(x.shape[1]):
            kd = self.k[d] if d < len(self.k) else self.k[-1]
            out = out * np.sin(kd * math.pi * x[:, d])
        return out

    def poisson_solution(self, x):
        """Solution of -div(grad u) = self on the unit box with zero boundary values."""
        x = np.asarray(x)
        ks = [self.k[d] if d < len(self.k) else self.k[-1] for d in range(x.shape[1])]
        scale = math.pi ** 2 * sum(kd ** 2 for kd in ks)
        return SeparableSine(self.amp / scale, tuple(ks))(x)


@dataclass(frozen=True)
class VectorField:
    """Scalar profile times a fixed direction; used for body forces and vector data."""

    profile: object
    direction: tuple

    def __call__(self, x):
        return np.outer(self.profile(x), np.asarray(self.direction, dtype=float))


@dataclass(frozen=True)
class LinearDatum:
    """value + slope . x (exterior Dirichlet datum)."""

    value: float = 0.0
    slope: Sequence[float] = (0.0,)

    def __call__(self, x):
        x = np.asarray(x)
        s = np.zeros(x.shape[1])
        s[: len(self.slope)] = self.slope[: x.shape[1]]
        return self.value + x @ s

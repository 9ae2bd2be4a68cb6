"""Desk-scale configurations shared by the test modules."""

from __future__ import annotations

import numpy as np

from lnlcoupling.geometry import Label, build_grid, default_pad, halfspace
from lnlcoupling.kernels import (ConstantSource, GaussianBump, KernelSpec, LinearDatum,
                                 PiecewiseCoefficient, SurfaceKernelSpec, VectorField)
from lnlcoupling.models import ModelConfig

KINDS = ["scalar_source", "scalar_source_full", "scalar_flux", "scalar_pr", "elastic_source", "elastic_flux"]
COUPLED = ["scalar_source", "scalar_flux", "elastic_source", "elastic_flux"]


def split_model(kind: str, dim: int = 1, h: float = 1 / 20, rho: float = 0.2, gap: float = 0.0,
                exterior: bool = True, dirichlet: bool = True, source=None, datum=None, coeff=None,
                kernel: str = "top_hat", cut: float = 0.5) -> ModelConfig:
    """Local below ``cut`` along axis 0, nonlocal above, optional EXTERIOR gap between."""
    pad = default_pad(rho, h) if exterior else 0
    grid = build_grid(dim, [(0.0, 1.0)] * dim, h, halfspace(0, cut, gap=gap), pad)
    if source is None:
        source = GaussianBump(1.0, (0.5,) * dim, 0.3)
        if kind.startswith("elastic"):
            source = VectorField(source, (1.0,) + (0.5,) * (dim - 1))
    return ModelConfig(kind, grid, kernel=KernelSpec(kernel, rho), gkernel=SurfaceKernelSpec("top_hat", rho),
                       source=source, datum=datum, coeff=coeff, exterior=exterior, dirichlet=dirichlet)


def rich_model(kind: str, dim: int) -> ModelConfig:
    """Every term switched on: gaussian kernel, coefficient, load and a nonzero exterior datum."""
    h = 1 / 16 if dim == 1 else 1 / 8
    scalar = not kind.startswith("elastic")
    datum = LinearDatum(0.5, (1.0, -0.5)) if kind != "scalar_pr" else None
    coeff = PiecewiseCoefficient(1.0, 3.0, 0, 0.4) if scalar else None
    src = ConstantSource(2.0) if scalar else VectorField(ConstantSource(2.0), (1.0, -1.0)[:dim])
    return split_model(kind, dim, h, 0.25, source=src, datum=datum, coeff=coeff, kernel="trunc_gaussian")


def nonlocal_only(dim: int, n: int, rho: float, gap_box=None) -> ModelConfig:
    """Unconstrained pure-nonlocal operator; ``gap_box`` paints an EXTERIOR slab splitting the region."""
    h = 1.0 / n
    labels = np.full((n,) * dim, int(Label.NONLOCAL), dtype=np.int8)
    if gap_box is not None:
        lo, hi = gap_box
        centers = (np.arange(n) + 0.5) * h
        sl = (centers > lo) & (centers < hi)
        labels[sl] = int(Label.EXTERIOR)
    grid = build_grid(dim, [(0.0, 1.0)] * dim, h, labels)
    return ModelConfig("scalar_source", grid, kernel=KernelSpec("top_hat", rho), exterior=False, dirichlet=False)

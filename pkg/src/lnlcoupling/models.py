"""Model configurations, system assembly and direct energy evaluation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import elastic_models as em
from . import scalar_models as sm
from .dofs import DofMap, QuadraticSystem, build_dofmap, gauss_gradient
from .geometry import TIE_RTOL, FacetSet, GridDomain, Label, Mode, extract_gamma
from .kernels import Coefficient, KernelSpec, SurfaceKernelSpec
from .scalar_models import NonlocalMode


class ModelKind(str, enum.Enum):
    SCALAR_SOURCE = "scalar_source"
    SCALAR_SOURCE_FULL = "scalar_source_full"
    SCALAR_FLUX = "scalar_flux"
    SCALAR_PR = "scalar_pr"
    ELASTIC_SOURCE = "elastic_source"
    ELASTIC_FLUX = "elastic_flux"

    @property
    def is_elastic(self) -> bool:
        return self in (ModelKind.ELASTIC_SOURCE, ModelKind.ELASTIC_FLUX)

    @property
    def is_flux(self) -> bool:
        return self in (ModelKind.SCALAR_FLUX, ModelKind.ELASTIC_FLUX)

    @property
    def nonlocal_mode(self) -> NonlocalMode:
        return {
            ModelKind.SCALAR_SOURCE: NonlocalMode.SOURCE,
            ModelKind.SCALAR_SOURCE_FULL: NonlocalMode.SOURCE_FULL,
            ModelKind.SCALAR_FLUX: NonlocalMode.FLUX,
            ModelKind.SCALAR_PR: NonlocalMode.OMEGA,
            ModelKind.ELASTIC_SOURCE: NonlocalMode.SOURCE,
            ModelKind.ELASTIC_FLUX: NonlocalMode.FLUX,
        }[self]

    @property
    def admissibility_mode(self) -> Mode:
        return Mode.FLUX if self.is_flux else Mode.SOURCE


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Everything that defines one discrete energy.

    ``exterior=False`` drops every interaction with EXTERIOR cells and
    ``dirichlet=False`` keeps boundary vertices as unknowns; both off gives
    the unconstrained operator used for null-space checks.
    """

    kind: ModelKind
    grid: GridDomain
    kernel: KernelSpec | None = None
    gkernel: SurfaceKernelSpec | None = None
    coeff: Coefficient | None = None
    source: Callable | None = None
    elastic: em.ElasticParams | None = None
    datum: Callable | None = None
    exterior: bool = True
    dirichlet: bool = True
    p: float = 2.0
    r: float = 2.0
    _gamma: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.kind.is_elastic and self.elastic is None:
            object.__setattr__(self, "elastic", em.ElasticParams())

    @property
    def block(self) -> int:
        return self.grid.dim if self.kind.is_elastic else 1

    @property
    def gamma(self) -> FacetSet:
        if not self._gamma:
            self._gamma.append(extract_gamma(self.grid))
        return self._gamma[0]

    def dofmap(self) -> DofMap:
        return build_dofmap(self.grid, self.block, self.dirichlet)

    def with_(self, **kw) -> "ModelConfig":
        kw.setdefault("_gamma", [])
        return replace(self, **kw)


def _has_nonlocal(grid: GridDomain) -> bool:
    return bool(np.any(grid.flat_labels == Label.NONLOCAL))


def assemble_system(model: ModelConfig, dofmap: DofMap | None = None) -> QuadraticSystem:
    """Assemble ``E(w) = 1/2 w.A w - b.w + offset`` for ``model``."""
    grid = model.grid
    kind = model.kind
    dofmap = dofmap or model.dofmap()
    size = dofmap.n_full * dofmap.block
    parts: dict[str, sp.csr_matrix] = {}
    has_local = bool(np.any(grid.flat_labels == Label.LOCAL))
    if kind is ModelKind.SCALAR_PR and not (model.p == 2 and model.r == 2):
        raise ValueError("the p,r model is quadratic only for p = r = 2; use minimize_nonlinear")

    if has_local:
        if kind.is_elastic:
            parts["local"] = em.assemble_elastic_local(grid, dofmap, model.elastic)
        else:
            parts["local"] = sm.assemble_local_stiffness(grid, dofmap, model.coeff)
    if model.kernel is not None and _has_nonlocal(grid):
        if kind.is_elastic:
            parts["nonlocal"] = em.assemble_bond(grid, dofmap, model.kernel, kind.nonlocal_mode, model.exterior)
        else:
            parts["nonlocal"] = sm.assemble_nonlocal(grid, dofmap, model.kernel, kind.nonlocal_mode,
                                                     model.coeff, model.exterior)
    if kind.is_flux and model.gkernel is not None and len(model.gamma):
        if kind.is_elastic:
            parts["gamma"] = em.assemble_bond_gamma(grid, model.gamma, dofmap, model.gkernel)
        else:
            parts["gamma"] = sm.assemble_gamma_coupling(grid, model.gamma, dofmap, model.gkernel)

    K = sp.csr_matrix((size, size))
    for mat in parts.values():
        K = K + mat
    K = sm._symmetric(K)
    b_full = sm.assemble_load(grid, dofmap, model.source)
    A, b, offset, ext, fixed = sm.apply_exterior_shift(K, b_full, dofmap, model.datum)
    parts["full"] = K
    parts["b_full"] = b_full
    return QuadraticSystem(A=A, b=b, M=dofmap.mass, dofmap=dofmap, offset=offset,
                           extension=ext, fixed_values=fixed, parts=parts)


# ---------------------------------------------------------------- direct energy


def _cell_values(dofmap: DofMap, u_full: np.ndarray) -> np.ndarray:
    """Field value at every cell center, shape (n_cells, block)."""
    grid = dofmap.grid
    U = u_full.reshape(dofmap.n_full, dofmap.block)
    out = np.zeros((grid.n_cells, dofmap.block))
    lab = grid.flat_labels
    local = np.flatnonzero(lab == Label.LOCAL)
    other = np.flatnonzero(lab != Label.LOCAL)
    out[other] = U[dofmap.cell_node[other]]
    if len(local):
        corners = dofmap.vertex_node[grid.cell_vertices(local)]
        out[local] = U[corners].mean(axis=1)
    return out


def _brute_pairs(grid: GridDomain, rho: float, rows: np.ndarray, cols: np.ndarray):
    tree = cKDTree(grid.centers())
    raw = tree.query_pairs(rho * (1.0 + TIE_RTOL), output_type="ndarray")
    both = np.concatenate([raw, raw[:, ::-1]])
    rmask = np.zeros(grid.n_cells, bool)
    cmask = np.zeros(grid.n_cells, bool)
    rmask[rows] = True
    cmask[cols] = True
    keep = rmask[both[:, 0]] & cmask[both[:, 1]]
    return both[keep, 0], both[keep, 1]


def local_energy_density(model: ModelConfig, grads: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Integrand of the local term at quadrature points; grads[q, comp, axis]."""
    if model.kind.is_elastic:
        E = 0.5 * (grads + np.swapaxes(grads, 1, 2))
        div = np.trace(grads, axis1=1, axis2=2)
        return model.elastic.mu * np.sum(E * E, axis=(1, 2)) + 0.5 * model.elastic.lam * div ** 2
    a = np.ones(len(grads)) if model.coeff is None else model.coeff.point(centers)
    return 0.5 * a * np.sum(grads[:, 0, :] ** 2, axis=1)


def discrete_energy(model: ModelConfig, u_full: np.ndarray, dofmap: DofMap | None = None) -> float:
    """Sum every term of the discrete energy directly from field values.

    Independent of the assembled matrices: gradients at Gauss points, cell
    values by explicit averaging and pairs from a k-d tree.
    """
    grid = model.grid
    dofmap = dofmap or model.dofmap()
    dim, h, blk = grid.dim, grid.h, dofmap.block
    U = np.asarray(u_full, dtype=float).reshape(dofmap.n_full, blk)
    total = 0.0

    gg = gauss_gradient(dofmap)
    if len(gg.weights):
        grads = np.stack([np.stack([op @ U[:, k] for op in gg.ops], axis=-1) for k in range(blk)], axis=1)
        dens = local_energy_density(model, grads, grid.centers(gg.cells))
        total += float(np.sum(gg.weights * dens))

    vals = _cell_values(dofmap, U.ravel())
    if model.kernel is not None and _has_nonlocal(grid):
        rows, cols = sm.pair_sets(grid, model.kind.nonlocal_mode, model.exterior)
        i, j = _brute_pairs(grid, model.kernel.rho, rows, cols)
        x = grid.centers()
        z = x[i] - x[j]
        J = model.kernel.radial(np.linalg.norm(z, axis=1), dim)
        diff = vals[j] - vals[i]
        if model.kind.is_elastic:
            sq = np.sum(z * diff, axis=1) ** 2
        else:
            sq = diff[:, 0] ** 2
            if model.coeff is not None:
                J = J * model.coeff.pair(x[i], x[j])
        total += 0.5 * float(np.sum(J * sq)) * h ** (2 * dim)

    if model.kind.is_flux and model.gkernel is not None and len(model.gamma):
        gam = model.gamma
        trace = np.array([U[dofmap.vertex_node[v]].mean(axis=0) for v in gam.vertices])
        nl = grid.cells_with(Label.NONLOCAL)
        xc = grid.centers(nl)
        for fi in range(len(gam)):
            d = xc - gam.center[fi]
            G = model.gkernel.radial(np.linalg.norm(d, axis=1))
            diff = trace[fi] - vals[nl]
            sq = np.sum(d * diff, axis=1) ** 2 if model.kind.is_elastic else diff[:, 0] ** 2
            total += 0.5 * float(np.sum(G * sq)) * gam.measure[fi] * h ** dim

    if model.source is not None:
        f = sm.node_values(dofmap, model.source)
        weight = dofmap.node_mass.copy()
        weight[dofmap.n_full - dofmap.n_exterior:] = 0.0
        total -= float(np.sum(f * U * weight[:, None]))
    return total

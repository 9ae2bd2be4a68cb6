"""Linearized elasticity on the local region and bond-based peridynamic terms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dofs import DofMap, cell_interpolation, facet_pairs, facet_trace, interaction_pairs
from .geometry import FacetSet, GridDomain, Label
from .kernels import KernelSpec, SurfaceKernelSpec
from .scalar_models import (NonlocalMode, _symmetric, check_padding, gradient_products,
                            pair_sets, scatter_elements)


@dataclass(frozen=True)
class ElasticParams:
    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError("Lame coefficients must be positive")


def elastic_element(dim: int, h: float, params: ElasticParams) -> np.ndarray:
    """Element matrix of mu|E(U)|^2 + lam/2 (div U)^2 (energy = 1/2 U.K U).

    Rows and columns are ordered (vertex, component) with the component fastest.
    """
    G = gradient_products(dim, h)
    nloc = 2 ** dim
    lap = sum(G[a, a] for a in range(dim))
    K = np.zeros((nloc, dim, nloc, dim))
    for k in range(dim):
        for m in range(dim):
            blk = params.mu * G[m, k] + params.lam * G[k, m]
            if k == m:
                blk = blk + params.mu * lap
            K[:, k, :, m] = blk
    return K.reshape(nloc * dim, nloc * dim)


def assemble_elastic_local(grid: GridDomain, dofmap: DofMap, params: ElasticParams) -> sp.csr_matrix:
    local = grid.cells_with(Label.LOCAL)
    if len(local) == 0:
        raise ValueError("no LOCAL cells")
    if dofmap.block != grid.dim:
        raise ValueError("elastic assembly needs block size == dim")
    ke = elastic_element(grid.dim, grid.h, params)
    return _symmetric(scatter_elements(dofmap, local, ke, np.ones(len(local))))


def _projected(D: sp.csr_matrix, disp: np.ndarray, dim: int) -> sp.csr_matrix:
    """Rows ``sum_k disp[:, k] * D`` acting on component k of interleaved dofs."""
    out = None
    for k in range(dim):
        e = np.zeros((1, dim))
        e[0, k] = 1.0
        term = sp.diags(disp[:, k]) @ sp.kron(D, sp.csr_matrix(e), format="csr")
        out = term if out is None else out + term
    return out.tocsr()


def assemble_bond(grid: GridDomain, dofmap: DofMap, J: KernelSpec,
                  mode: NonlocalMode | str = NonlocalMode.SOURCE, exterior: bool = True) -> sp.csr_matrix:
    """1/2 sum_ij J(x_i - x_j) |(x_i - x_j).(U_j - U_i)|^2 h^(2N)."""
    mode = NonlocalMode(mode)
    if mode not in (NonlocalMode.SOURCE, NonlocalMode.FLUX):
        raise ValueError(f"bond assembly supports source and flux modes, got {mode.value}")
    if exterior:
        check_padding(grid, J.rho)
    rows, cols = pair_sets(grid, mode, exterior)
    pairs = interaction_pairs(grid, J.rho, rows, cols)
    size = dofmap.n_full * dofmap.block
    if len(pairs) == 0:
        return sp.csr_matrix((size, size))
    w = J.radial(np.linalg.norm(pairs.disp, axis=1), grid.dim) * grid.h ** (2 * grid.dim)
    P = cell_interpolation(dofmap)
    D = _projected((P[pairs.j] - P[pairs.i]).tocsr(), pairs.disp, grid.dim)
    return _symmetric(D.T @ sp.diags(w) @ D)


def assemble_bond_gamma(grid: GridDomain, gamma: FacetSet, dofmap: DofMap, G: SurfaceKernelSpec) -> sp.csr_matrix:
    """1/2 sum G(z, x) |(x - z).(U(z) - U(x))|^2 |facet| h^N over facets z, NONLOCAL x."""
    size = dofmap.n_full * dofmap.block
    f, c, d = facet_pairs(grid, gamma, G.rho)
    if len(f) == 0:
        return sp.csr_matrix((size, size))
    w = G.radial(np.linalg.norm(d, axis=1)) * gamma.measure[f] * grid.h ** grid.dim
    D = (facet_trace(dofmap, gamma)[f] - cell_interpolation(dofmap)[c]).tocsr()
    D = _projected(D, d, grid.dim)
    return _symmetric(D.T @ sp.diags(w) @ D)


def rigid_motions(coords: np.ndarray) -> np.ndarray:
    """Translations and infinitesimal rotations at ``coords`` as interleaved vectors.

    Returns ``dim*(dim+1)/2`` rows; rotation (a, b) is U_a = -x_b, U_b = x_a.
    """
    coords = np.asarray(coords, dtype=float)
    n, dim = coords.shape
    basis = []
    for k in range(dim):
        v = np.zeros((n, dim))
        v[:, k] = 1.0
        basis.append(v.ravel())
    for a, b in itertools.combinations(range(dim), 2):
        v = np.zeros((n, dim))
        v[:, a] = -coords[:, b]
        v[:, b] = coords[:, a]
        basis.append(v.ravel())
    return np.array(basis)


def rigid_motion_basis(dofmap: DofMap, grid: GridDomain | None = None, full: bool = False) -> np.ndarray:
    """Rigid motions evaluated at the active (or all) node coordinates."""
    coords = dofmap.node_coords if full else dofmap.node_coords[: dofmap.n]
    return rigid_motions(coords)

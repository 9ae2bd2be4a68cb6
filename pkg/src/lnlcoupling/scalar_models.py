"""Quadratic forms of the scalar coupled energies.

Every ``assemble_*`` function returns a symmetric sparse matrix on the full
node vector (active and fixed nodes, see :mod:`lnlcoupling.dofs`).  Energies
are ``1/2 u.K u``; the load enters separately.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp

from .dofs import (DofMap, cell_interpolation, facet_pairs, facet_trace,
                   interaction_pairs, split)
from .geometry import TIE_RTOL, FacetSet, GridDomain, Label
from .kernels import Coefficient, KernelSpec, SurfaceKernelSpec


class NonlocalMode(str, enum.Enum):
    SOURCE = "source"  # Omega_nl x R^N
    SOURCE_FULL = "source_full"  # (R^N \ Omega_l) x R^N
    FLUX = "flux"  # Omega_nl x (R^N \ Omega_l)
    OMEGA = "omega"  # Omega_nl x Omega (nonlinear model)


def pair_sets(grid: GridDomain, mode: NonlocalMode | str, exterior: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Outer (x) and inner (y) cell sets of the double integral for ``mode``."""
    mode = NonlocalMode(mode)
    lab = grid.flat_labels
    L, N, E = (lab == Label.LOCAL), (lab == Label.NONLOCAL), (lab == Label.EXTERIOR)
    if mode is NonlocalMode.SOURCE:
        rows, cols = N, L | N | E
    elif mode is NonlocalMode.SOURCE_FULL:
        rows, cols = N | E, L | N | E
    elif mode is NonlocalMode.FLUX:
        rows, cols = N, N | E
    else:
        rows, cols = N, L | N
    if not exterior:
        rows, cols = rows & ~E, cols & ~E
    return np.flatnonzero(rows), np.flatnonzero(cols)


def check_padding(grid: GridDomain, rho: float) -> None:
    if grid.pad * grid.h < rho * (1.0 - TIE_RTOL):
        raise ValueError(
            f"insufficient padding for horizon {rho}: pad*h = {grid.pad * grid.h}"
        )


def _symmetric(K: sp.spmatrix) -> sp.csr_matrix:
    K = sp.csr_matrix(K)
    out = (K + K.T) * 0.5
    out.sum_duplicates()
    out.sort_indices()
    return out.tocsr()


def element_matrices_1d(h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1D linear element: stiffness, mass and mixed matrix D[i, j] = int phi_i' phi_j."""
    k = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    m = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    d = np.array([[-0.5, -0.5], [0.5, 0.5]])
    return k, m, d


def gradient_products(dim: int, h: float) -> np.ndarray:
    """G[a, b][i, j] = int d_a phi_i d_b phi_j over one cell, exact for multilinear phi."""
    k, m, d = element_matrices_1d(h)
    nloc = 2 ** dim
    G = np.zeros((dim, dim, nloc, nloc))
    for a in range(dim):
        for b in range(dim):
            mat = np.ones((1, 1))
            for axis in range(dim):
                if a == b == axis:
                    f = k
                elif axis == a:
                    f = d
                elif axis == b:
                    f = d.T
                else:
                    f = m
                mat = np.kron(mat, f)
            G[a, b] = mat
    return G


def laplace_element(dim: int, h: float) -> np.ndarray:
    G = gradient_products(dim, h)
    return sum(G[a, a] for a in range(dim))


def scatter_elements(dofmap: DofMap, cells: np.ndarray, ke: np.ndarray, scale: np.ndarray) -> sp.csr_matrix:
    """Sum ``scale[c] * ke`` over cells into the full (block) matrix.

    ``ke`` is indexed ``[(vertex, comp), (vertex, comp)]`` with the block
    component fastest.
    """
    grid = dofmap.grid
    nodes = dofmap.vertex_node[grid.cell_vertices(cells)]
    dofs = (nodes[:, :, None] * dofmap.block + np.arange(dofmap.block)).reshape(len(cells), -1)
    nd = dofs.shape[1]
    rows = np.repeat(dofs, nd, axis=1).ravel()
    cols = np.tile(dofs, (1, nd)).ravel()
    vals = (scale[:, None, None] * ke[None]).ravel()
    size = dofmap.n_full * dofmap.block
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def assemble_local_stiffness(grid: GridDomain, dofmap: DofMap, a_coeff: Coefficient | None = None) -> sp.csr_matrix:
    """Multilinear stiffness of 1/2 int a(x)|grad u|^2 over the LOCAL cells."""
    local = grid.cells_with(Label.LOCAL)
    if len(local) == 0:
        raise ValueError("no LOCAL cells")
    if dofmap.n_vertex == 0:
        raise ValueError("no active vertex dofs in the local region")
    scale = np.ones(len(local)) if a_coeff is None else np.asarray(a_coeff.point(grid.centers(local)), float)
    return _symmetric(scatter_elements(dofmap, local, laplace_element(grid.dim, grid.h), scale))


def difference_operator(P: sp.csr_matrix, i: np.ndarray, j: np.ndarray) -> sp.csr_matrix:
    """Rows ``P[j] - P[i]``."""
    return (P[j] - P[i]).tocsr()


def assemble_nonlocal(grid: GridDomain, dofmap: DofMap, J: KernelSpec,
                      mode: NonlocalMode | str = NonlocalMode.SOURCE,
                      coeff: Coefficient | None = None, exterior: bool = True) -> sp.csr_matrix:
    """Midpoint quadrature of 1/2 sum_ij J(x_i - x_j) b(x_i, x_j) (u_j - u_i)^2 h^(2N)."""
    mode = NonlocalMode(mode)
    if exterior and mode is not NonlocalMode.OMEGA:
        check_padding(grid, J.rho)
    rows, cols = pair_sets(grid, mode, exterior)
    pairs = interaction_pairs(grid, J.rho, rows, cols)
    size = dofmap.n_full
    if len(pairs) == 0:
        return sp.csr_matrix((size, size))
    w = J.radial(np.linalg.norm(pairs.disp, axis=1), grid.dim) * grid.h ** (2 * grid.dim)
    if coeff is not None:
        w = w * coeff.pair(grid.centers(pairs.i), grid.centers(pairs.j))
    D = difference_operator(cell_interpolation(dofmap), pairs.i, pairs.j)
    return _symmetric(D.T @ sp.diags(w) @ D)


def assemble_gamma_coupling(grid: GridDomain, gamma: FacetSet, dofmap: DofMap, G: SurfaceKernelSpec) -> sp.csr_matrix:
    """1/2 sum_x sum_z G(z, x) (u(x) - u(z))^2 |facet| h^N over NONLOCAL cells x, facets z."""
    size = dofmap.n_full
    f, c, d = facet_pairs(grid, gamma, G.rho)
    if len(f) == 0:
        return sp.csr_matrix((size, size))
    w = G.radial(np.linalg.norm(d, axis=1)) * gamma.measure[f] * grid.h ** grid.dim
    D = (cell_interpolation(dofmap)[c] - facet_trace(dofmap, gamma)[f]).tocsr()
    return _symmetric(D.T @ sp.diags(w) @ D)


def node_values(dofmap: DofMap, f) -> np.ndarray:
    """Evaluate ``f`` at every node, shape (n_full, block); scalar output is broadcast."""
    vals = np.asarray(f(dofmap.node_coords), dtype=float)
    if vals.ndim == 1 and dofmap.block > 1:
        vals = np.repeat(vals[:, None], dofmap.block, axis=1)
    return vals.reshape(dofmap.n_full, dofmap.block)


def assemble_load(grid: GridDomain, dofmap: DofMap, f) -> np.ndarray:
    """Lumped load on the full node vector; EXTERIOR cells carry no load."""
    size = dofmap.n_full * dofmap.block
    if f is None:
        return np.zeros(size)
    vals = node_values(dofmap, f)
    if not np.all(np.isfinite(vals)):
        raise ValueError("source term is not finite on the domain")
    b = vals * dofmap.node_mass[:, None]
    ext = dofmap.n_full - dofmap.n_exterior
    b[ext:] = 0.0
    return b.ravel()


def datum_values(dofmap: DofMap, g_d) -> np.ndarray:
    """Extension of the exterior datum to every node of the full vector."""
    size = dofmap.n_full * dofmap.block
    if g_d is None:
        return np.zeros(size)
    return node_values(dofmap, g_d).ravel()


def apply_exterior_shift(K: sp.spmatrix, b_full: np.ndarray, dofmap: DofMap, g_d=None):
    """Rewrite the problem for w = u - g_d with homogeneous exterior data.

    ``g_d`` is extended to all nodes by evaluation; the cross terms of the
    expanded squares move into the load and the constant part into the
    offset.  Returns ``(A, b, offset, extension, fixed_values)``.
    """
    values = datum_values(dofmap, g_d)
    A, b, offset, ext = split(K, b_full, dofmap.n_dofs, values)
    return A, b, offset, ext, values[dofmap.n_dofs:].copy()

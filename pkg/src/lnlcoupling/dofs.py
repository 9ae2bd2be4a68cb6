"""Degrees of freedom, interpolation operators and assembled systems.

Unknowns live on two kinds of nodes: grid vertices of the closure of the
LOCAL region (multilinear elements) and NONLOCAL cell centers (piecewise
constants).  Values that are prescribed rather than solved for -- vertices on
the outer boundary and EXTERIOR cells -- are kept as *fixed* nodes appended
after the active ones, so every operator is first built on the full node
vector ``[active | fixed]`` and then split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import TIE_RTOL, FacetSet, GridDomain, Label

VERTEX, CELL = 0, 1


@dataclass(frozen=True, eq=False)
class DofMap:
    """Node numbering for one grid.

    Active nodes are numbered first (active vertices, then NONLOCAL cells);
    fixed nodes (eliminated boundary vertices, then EXTERIOR cells) follow.
    With ``block > 1`` each node carries ``block`` interleaved components.
    """

    grid: GridDomain
    block: int
    n_vertex: int  # active vertex nodes
    n_cell: int  # NONLOCAL cell nodes
    n_fixed_vertex: int
    n_exterior: int
    vertex_node: np.ndarray  # flat vertex index -> node, -1 if not a node
    cell_node: np.ndarray  # flat cell index -> node, -1 for LOCAL cells
    node_coords: np.ndarray
    node_kind: np.ndarray
    node_mass: np.ndarray  # lumped measure per node (full)
    node_item: np.ndarray  # flat vertex or cell index of each node

    @property
    def n(self) -> int:
        """Number of active nodes."""
        return self.n_vertex + self.n_cell

    @property
    def n_full(self) -> int:
        return self.n + self.n_fixed_vertex + self.n_exterior

    @property
    def n_dofs(self) -> int:
        return self.n * self.block

    def expand(self, nodes: np.ndarray) -> np.ndarray:
        """Node indices to interleaved dof indices."""
        nodes = np.asarray(nodes, dtype=np.intp)
        return (nodes[:, None] * self.block + np.arange(self.block)).ravel()

    @property
    def mass(self) -> np.ndarray:
        """Diagonal of the lumped mass matrix on active dofs."""
        return np.repeat(self.node_mass[: self.n], self.block)


def build_dofmap(grid: GridDomain, block: int = 1, dirichlet: bool = True) -> DofMap:
    """Number the nodes of ``grid``.

    ``dirichlet=False`` keeps boundary vertices active (no elimination).
    """
    lab = grid.flat_labels
    local = grid.cells_with(Label.LOCAL)
    nonlocal_ = grid.cells_with(Label.NONLOCAL)
    exterior = grid.cells_with(Label.EXTERIOR)

    verts = np.unique(grid.cell_vertices(local)) if len(local) else np.zeros(0, dtype=np.intp)
    around = grid.vertex_cells(verts)
    on_boundary = np.any((around < 0) | (lab[np.maximum(around, 0)] == Label.EXTERIOR), axis=1)
    if dirichlet:
        active_v, fixed_v = verts[~on_boundary], verts[on_boundary]
    else:
        active_v, fixed_v = verts, verts[:0]

    n_full_vertices = int(np.prod(grid.vertex_shape))
    vertex_node = np.full(n_full_vertices, -1, dtype=np.intp)
    cell_node = np.full(grid.n_cells, -1, dtype=np.intp)
    offset = 0
    vertex_node[active_v] = offset + np.arange(len(active_v))
    offset += len(active_v)
    cell_node[nonlocal_] = offset + np.arange(len(nonlocal_))
    offset += len(nonlocal_)
    vertex_node[fixed_v] = offset + np.arange(len(fixed_v))
    offset += len(fixed_v)
    cell_node[exterior] = offset + np.arange(len(exterior))

    coords = np.concatenate([
        grid.vertex_coords(active_v), grid.centers(nonlocal_),
        grid.vertex_coords(fixed_v), grid.centers(exterior),
    ])
    kind = np.concatenate([
        np.full(len(active_v), VERTEX), np.full(len(nonlocal_), CELL),
        np.full(len(fixed_v), VERTEX), np.full(len(exterior), CELL),
    ])
    item = np.concatenate([active_v, nonlocal_, fixed_v, exterior])

    vol = grid.h ** grid.dim
    vmass = np.zeros(n_full_vertices)
    if len(local):
        np.add.at(vmass, grid.cell_vertices(local).ravel(), vol / 2 ** grid.dim)
    mass = np.concatenate([
        vmass[active_v], np.full(len(nonlocal_), vol),
        vmass[fixed_v], np.full(len(exterior), vol),
    ])
    return DofMap(
        grid=grid, block=block,
        n_vertex=len(active_v), n_cell=len(nonlocal_),
        n_fixed_vertex=len(fixed_v), n_exterior=len(exterior),
        vertex_node=vertex_node, cell_node=cell_node,
        node_coords=coords, node_kind=kind, node_mass=mass, node_item=item,
    )


# ---------------------------------------------------------------- operators


def cell_interpolation(dofmap: DofMap) -> sp.csr_matrix:
    """Value at every cell center as a combination of full-node values.

    LOCAL cells average their vertices (the multilinear value at the center);
    NONLOCAL and EXTERIOR cells read their own node.
    """
    grid = dofmap.grid
    lab = grid.flat_labels
    rows, cols, vals = [], [], []
    own = np.flatnonzero(lab != Label.LOCAL)
    rows.append(own)
    cols.append(dofmap.cell_node[own])
    vals.append(np.ones(len(own)))
    local = np.flatnonzero(lab == Label.LOCAL)
    if len(local):
        cv = dofmap.vertex_node[grid.cell_vertices(local)]
        k = cv.shape[1]
        rows.append(np.repeat(local, k))
        cols.append(cv.ravel())
        vals.append(np.full(cv.size, 1.0 / k))
    r, c, v = (np.concatenate(a) for a in (rows, cols, vals))
    return sp.csr_matrix((v, (r, c)), shape=(grid.n_cells, dofmap.n_full))


def facet_trace(dofmap: DofMap, gamma: FacetSet) -> sp.csr_matrix:
    """Trace of the local field at facet centers (average of facet vertices)."""
    nodes = dofmap.vertex_node[gamma.vertices]
    m, k = nodes.shape if len(gamma) else (0, 1)
    return sp.csr_matrix(
        (np.full(m * k, 1.0 / k), (np.repeat(np.arange(m), k), nodes.ravel())),
        shape=(m, dofmap.n_full),
    )


_GAUSS = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


@dataclass(frozen=True)
class GaussGradient:
    """Gradient of the multilinear field at 2**dim Gauss points per LOCAL cell."""

    ops: tuple  # one sparse (n_points x n_full) matrix per axis
    weights: np.ndarray
    points: np.ndarray
    cells: np.ndarray  # owning LOCAL cell of each point


def gauss_gradient(dofmap: DofMap) -> GaussGradient:
    grid = dofmap.grid
    dim, h = grid.dim, grid.h
    local = grid.cells_with(Label.LOCAL)
    cv = dofmap.vertex_node[grid.cell_vertices(local)] if len(local) else np.zeros((0, 2 ** dim), dtype=np.intp)
    corners = np.array(list(np.ndindex(*(2,) * dim)))
    qpts = np.array(list(np.ndindex(*(2,) * dim)))
    n_q = len(qpts)
    ops, rows = [], np.arange(len(local) * n_q)
    base = grid.centers(local) - 0.5 * h if len(local) else np.zeros((0, dim))
    points = (base[:, None, :] + h * _GAUSS[qpts][None, :, :]).reshape(-1, dim)
    for axis in range(dim):
        vals = np.zeros((n_q, len(corners)))
        for qi, q in enumerate(qpts):
            t = _GAUSS[q]
            for ci, c in enumerate(corners):
                w = (1.0 if c[axis] else -1.0) / h
                for m in range(dim):
                    if m != axis:
                        w *= t[m] if c[m] else 1.0 - t[m]
                vals[qi, ci] = w
        data = np.broadcast_to(vals, (len(local), n_q, len(corners))).ravel()
        r = np.repeat(rows, len(corners))
        c = np.repeat(cv[:, None, :], n_q, axis=1).ravel()
        ops.append(sp.csr_matrix((data, (r, c)), shape=(len(rows), dofmap.n_full)))
    weights = np.full(len(rows), h ** dim / n_q)
    return GaussGradient(tuple(ops), weights, points, np.repeat(local, n_q))


# ---------------------------------------------------------------- pairs


@dataclass(frozen=True)
class Pairs:
    """Ordered quadrature pairs (i, j) of cells with displacement x_i - x_j."""

    i: np.ndarray
    j: np.ndarray
    disp: np.ndarray

    def __len__(self) -> int:
        return len(self.i)


def interaction_pairs(grid: GridDomain, rho: float, rows: np.ndarray, cols: np.ndarray) -> Pairs:
    """All ordered pairs with i in ``rows``, j in ``cols``, 0 < |x_i - x_j| <= rho.

    Pairs are enumerated offset by offset (lexicographic), rows ascending, so
    the result is deterministic.
    """
    dim, h = grid.dim, grid.h
    reach = int(math.floor(rho / h * (1.0 + TIE_RTOL)))
    row_mask = np.zeros(grid.n_cells, dtype=bool)
    col_mask = np.zeros(grid.n_cells, dtype=bool)
    row_mask[rows] = True
    col_mask[cols] = True
    row_cells = np.flatnonzero(row_mask)
    multi = np.stack(np.unravel_index(row_cells, grid.shape), axis=-1)
    shape = np.array(grid.shape)
    out_i, out_j, out_d = [], [], []
    for off in np.ndindex(*(2 * reach + 1,) * dim):
        o = np.array(off) - reach
        if not o.any():
            continue
        dist = h * math.sqrt(float(o @ o))
        if dist > rho * (1.0 + TIE_RTOL):
            continue
        tgt = multi + o
        ok = np.all((tgt >= 0) & (tgt < shape), axis=1)
        src = row_cells[ok]
        dst = np.ravel_multi_index(tuple(tgt[ok].T), grid.shape)
        keep = col_mask[dst]
        src, dst = src[keep], dst[keep]
        out_i.append(src)
        out_j.append(dst)
        out_d.append(np.broadcast_to(-o * h, (len(src), dim)))
    if not out_i:
        return Pairs(np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), np.zeros((0, dim)))
    return Pairs(np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d))


def facet_pairs(grid: GridDomain, gamma: FacetSet, rho: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(facet, NONLOCAL cell, x_cell - z_facet) for all pairs within ``rho``."""
    nl = grid.cells_with(Label.NONLOCAL)
    if len(gamma) == 0 or len(nl) == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), np.zeros((0, grid.dim))
    xc = grid.centers(nl)
    fi, ci, dd = [], [], []
    for f in range(len(gamma)):
        d = xc - gamma.center[f]
        near = np.linalg.norm(d, axis=1) <= rho * (1.0 + TIE_RTOL)
        fi.append(np.full(int(near.sum()), f))
        ci.append(nl[near])
        dd.append(d[near])
    return np.concatenate(fi), np.concatenate(ci), np.concatenate(dd)


# ---------------------------------------------------------------- systems


@dataclass(frozen=True)
class Field:
    values: np.ndarray
    dofmap: DofMap

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")


@dataclass(frozen=True, eq=False)
class QuadraticSystem:
    """E(w) = 1/2 w.A w - b.w + offset on the active dofs.

    The physical field is ``u = w + extension`` on active dofs, with
    ``fixed_values`` on the fixed dofs.
    """

    A: sp.csr_matrix
    b: np.ndarray
    M: np.ndarray  # lumped mass diagonal
    dofmap: DofMap
    offset: float = 0.0
    extension: np.ndarray | None = None
    fixed_values: np.ndarray | None = None
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def energy(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return float(0.5 * dot(w, self.A @ w) - dot(self.b, w) + self.offset)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.A @ w - self.b

    def full_values(self, w: np.ndarray) -> np.ndarray:
        """Physical dof values on the full node vector ``[active | fixed]``."""
        ext = np.zeros(self.n) if self.extension is None else self.extension
        nf = self.dofmap.n_full * self.dofmap.block - self.n
        fixed = np.zeros(nf) if self.fixed_values is None else self.fixed_values
        return np.concatenate([np.asarray(w) + ext, fixed])

    def stats(self) -> dict:
        A = self.A
        asym = abs(A - A.T).max() if A.nnz else 0.0
        return {"n": self.n, "nnz": int(A.nnz), "symmetry_defect": float(asym)}


def dot(x: np.ndarray, y: np.ndarray) -> float:
    """Inner product with a fixed summation order (no threaded BLAS)."""
    return float(np.sum(np.multiply(x, y)))


def norm(x: np.ndarray) -> float:
    return math.sqrt(dot(x, x))


def split(K: sp.spmatrix, b: np.ndarray, n: int, values: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray, float, np.ndarray]:
    """Restrict ``1/2 u.K u - b.u`` to the first ``n`` dofs with ``u = w + values``.

    Returns ``(A, b_w, offset, extension)``; ``values`` holds the prescribed
    extension on every dof of the full vector.
    """
    K = sp.csr_matrix(K)
    Kg = K @ values
    A = K[:n, :n].tocsr()
    bw = b[:n] - Kg[:n]
    offset = 0.5 * dot(values, Kg) - dot(b, values)
    return A, bw, offset, values[:n].copy()

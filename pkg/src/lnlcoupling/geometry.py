"""Rasterized domains, Gamma extraction and admissibility checks.

A :class:`GridDomain` is a uniform Cartesian grid of square cells, each tagged
LOCAL, NONLOCAL or EXTERIOR.  The union of LOCAL and NONLOCAL cells is the
discrete domain; EXTERIOR cells carry the exterior datum.  All set distances
are measured between cell centers (facet centers for Gamma), which carries an
O(h) geometric error with respect to the continuous sets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

# relative slack used when comparing distances against delta or a horizon
TIE_RTOL = 1e-12


class Label(enum.IntEnum):
    EXTERIOR = 0
    LOCAL = 1
    NONLOCAL = 2


_MASK_CHARS = {"L": Label.LOCAL, "N": Label.NONLOCAL, "E": Label.EXTERIOR}


class Mode(str, enum.Enum):
    SOURCE = "source"
    FLUX = "flux"


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Uniform grid with per-cell labels, including ``pad`` exterior layers."""

    dim: int
    bbox: tuple[tuple[float, float], ...]
    h: float
    pad: int
    labels: np.ndarray  # padded shape, Label values

    @property
    def shape(self) -> tuple[int, ...]:
        return self.labels.shape

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(n - 2 * self.pad for n in self.shape)

    @property
    def n_cells(self) -> int:
        return self.labels.size

    @property
    def origin(self) -> np.ndarray:
        """Coordinates of the lowest corner of the padded grid."""
        return np.array([lo for lo, _ in self.bbox]) - self.pad * self.h

    @property
    def vertex_shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.shape)

    @property
    def flat_labels(self) -> np.ndarray:
        return self.labels.ravel()

    def centers(self, cells: np.ndarray | None = None) -> np.ndarray:
        """Cell-center coordinates, row-major over the padded grid."""
        idx = np.arange(self.n_cells) if cells is None else np.asarray(cells, dtype=np.intp)
        multi = np.stack(np.unravel_index(idx, self.shape), axis=-1)
        return self.origin + (multi + 0.5) * self.h

    def vertex_coords(self, vertices: np.ndarray) -> np.ndarray:
        multi = np.stack(np.unravel_index(np.asarray(vertices, dtype=np.intp), self.vertex_shape), axis=-1)
        return self.origin + multi * self.h

    def cells_with(self, label: Label) -> np.ndarray:
        return np.flatnonzero(self.flat_labels == label)

    def cell_vertices(self, cells: np.ndarray) -> np.ndarray:
        """Flat vertex indices of each cell, tensor ordered with axis 0 slowest."""
        multi = np.unravel_index(np.asarray(cells, dtype=np.intp), self.shape)
        corners = []
        for bits in np.ndindex(*(2,) * self.dim):
            corners.append(
                np.ravel_multi_index(tuple(m + b for m, b in zip(multi, bits)), self.vertex_shape)
            )
        return np.stack(corners, axis=-1)

    def vertex_cells(self, vertices: np.ndarray) -> np.ndarray:
        """Flat indices of the 2**dim cells around each vertex; -1 outside the grid."""
        multi = np.unravel_index(np.asarray(vertices, dtype=np.intp), self.vertex_shape)
        out = []
        for bits in np.ndindex(*(2,) * self.dim):
            cm = tuple(m - 1 + b for m, b in zip(multi, bits))
            inside = np.ones(len(cm[0]), dtype=bool)
            for k, c in enumerate(cm):
                inside &= (c >= 0) & (c < self.shape[k])
            clipped = tuple(np.clip(c, 0, n - 1) for c, n in zip(cm, self.shape))
            flat = np.ravel_multi_index(clipped, self.shape)
            out.append(np.where(inside, flat, -1))
        return np.stack(out, axis=-1)

    def face_pairs(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """All pairs (c, c + e_axis) of face-adjacent cells."""
        idx = np.arange(self.n_cells).reshape(self.shape)
        lo = [slice(None)] * self.dim
        hi = [slice(None)] * self.dim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        return idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()

    def boundary_cells(self) -> np.ndarray:
        """Cells on the outer layer of the padded grid (their outer faces are off-grid)."""
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return np.flatnonzero(mask.ravel())


def build_grid(
    dim: int,
    bbox: Sequence[Sequence[float]],
    h: float,
    labeler: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    pad: int = 0,
) -> GridDomain:
    """Rasterize ``bbox`` at spacing ``h`` and tag cells with ``labeler``.

    ``labeler`` maps an ``(m, dim)`` array of cell centers to labels, or is an
    integer array of the interior shape (e.g. read from a mask file).  Cells in
    the ``pad`` layers around ``bbox`` are always EXTERIOR.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if not h > 0:
        raise ValueError(f"grid spacing must be positive, got {h}")
    if pad < 0:
        raise ValueError(f"pad must be non-negative, got {pad}")
    bbox = tuple((float(lo), float(hi)) for lo, hi in bbox)
    if len(bbox) != dim:
        raise ValueError(f"bbox has {len(bbox)} intervals for dim={dim}")
    counts = []
    for lo, hi in bbox:
        n = int(round((hi - lo) / h))
        if n < 1 or abs(n * h - (hi - lo)) > 1e-9 * max(abs(hi - lo), 1.0):
            raise ValueError(f"h={h} does not divide the interval ({lo}, {hi})")
        counts.append(n)

    if callable(labeler):
        axes = [lo + (np.arange(n) + 0.5) * h for (lo, _), n in zip(bbox, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        inner = np.asarray(labeler(pts), dtype=np.int8).reshape(counts)
    else:
        inner = np.asarray(labeler, dtype=np.int8)
        if inner.shape != tuple(counts):
            raise ValueError(f"label array shape {inner.shape} does not match grid {tuple(counts)}")
    if not np.isin(inner, [int(v) for v in Label]).all():
        raise ValueError("labeler returned values outside {EXTERIOR, LOCAL, NONLOCAL}")

    labels = np.full([n + 2 * pad for n in counts], Label.EXTERIOR, dtype=np.int8)
    labels[tuple(slice(pad, pad + n) for n in counts)] = inner
    if not np.isin(labels, [Label.LOCAL, Label.NONLOCAL]).any():
        raise ValueError("grid has no LOCAL or NONLOCAL cells")
    labels.flags.writeable = False
    return GridDomain(dim=dim, bbox=bbox, h=float(h), pad=int(pad), labels=labels)


def default_pad(rho: float, h: float) -> int:
    return int(math.ceil(rho / h - TIE_RTOL))


# ---------------------------------------------------------------- labelers


def halfspace(axis: int = 0, cut: float = 0.5, below: Label = Label.LOCAL,
              above: Label = Label.NONLOCAL, gap: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """``below`` where x[axis] < cut, EXTERIOR in [cut, cut+gap), ``above`` beyond."""

    def labeler(x: np.ndarray) -> np.ndarray:
        t = x[:, axis]
        out = np.where(t < cut, int(below), int(above))
        if gap > 0:
            out = np.where((t >= cut) & (t < cut + gap), int(Label.EXTERIOR), out)
        return out

    return labeler


def boxes(background: Label, items: Sequence[tuple[Label, Sequence[float]]]) -> Callable[[np.ndarray], np.ndarray]:
    """Paint axis-aligned boxes ``(label, (lo0, hi0, lo1, hi1, ...))``; later boxes win."""

    def labeler(x: np.ndarray) -> np.ndarray:
        out = np.full(len(x), int(background))
        for lab, ext in items:
            inside = np.ones(len(x), dtype=bool)
            for k in range(x.shape[1]):
                inside &= (x[:, k] > ext[2 * k]) & (x[:, k] < ext[2 * k + 1])
            out[inside] = int(lab)
        return out

    return labeler


def balls(background: Label, items: Sequence[tuple[Label, Sequence[float], float]]) -> Callable[[np.ndarray], np.ndarray]:
    """Paint balls ``(label, center, radius)``; later balls win."""

    def labeler(x: np.ndarray) -> np.ndarray:
        out = np.full(len(x), int(background))
        for lab, center, radius in items:
            inside = np.linalg.norm(x - np.asarray(center, dtype=float), axis=1) < radius
            out[inside] = int(lab)
        return out

    return labeler


def parse_mask(text: str) -> np.ndarray:
    """Read a raster mask of ``L``/``N``/``E`` characters.

    Line ``i``, character ``j`` is the cell with axis-0 index ``i`` and axis-1
    index ``j``; a single line is a 1D grid.
    """
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise ValueError("empty mask")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("mask rows have unequal length")
    try:
        arr = np.array([[_MASK_CHARS[c] for c in r] for r in rows], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"mask character {exc.args[0]!r} not in {{L, N, E}}") from None
    return arr[0] if len(rows) == 1 else arr


def read_mask(path: str | Path) -> np.ndarray:
    return parse_mask(Path(path).read_text())


# ---------------------------------------------------------------- Gamma


@dataclass(frozen=True, eq=False)
class FacetSet:
    """Interior LOCAL/NONLOCAL interfaces (the discrete Gamma)."""

    local_cell: np.ndarray
    nonlocal_cell: np.ndarray
    normal: np.ndarray  # outward from the LOCAL cell
    center: np.ndarray
    measure: np.ndarray
    vertices: np.ndarray  # flat vertex indices, 2**(dim-1) per facet

    def __len__(self) -> int:
        return len(self.local_cell)


def extract_gamma(grid: GridDomain) -> FacetSet:
    lab = grid.flat_labels
    loc, nl, normals = [], [], []
    for axis in range(grid.dim):
        a, b = grid.face_pairs(axis)
        fwd = (lab[a] == Label.LOCAL) & (lab[b] == Label.NONLOCAL)
        bwd = (lab[a] == Label.NONLOCAL) & (lab[b] == Label.LOCAL)
        for sel, lc, nc, sign in ((fwd, a, b, 1.0), (bwd, b, a, -1.0)):
            lc, nc = lc[sel], nc[sel]
            nrm = np.zeros((len(lc), grid.dim))
            nrm[:, axis] = sign
            loc.append(lc)
            nl.append(nc)
            normals.append(nrm)
    local_cell = np.concatenate(loc) if loc else np.zeros(0, dtype=np.intp)
    nonlocal_cell = np.concatenate(nl) if nl else np.zeros(0, dtype=np.intp)
    normal = np.concatenate(normals) if normals else np.zeros((0, grid.dim))
    order = np.lexsort((nonlocal_cell, local_cell))
    local_cell, nonlocal_cell, normal = local_cell[order], nonlocal_cell[order], normal[order]

    center = grid.centers(local_cell) + 0.5 * grid.h * normal
    bits = np.array(list(np.ndindex(*(2,) * grid.dim)))  # corner ordering of cell_vertices
    cv = grid.cell_vertices(local_cell)
    vertices = np.zeros((len(local_cell), 2 ** (grid.dim - 1)), dtype=np.intp)
    for i in range(len(local_cell)):
        axis = int(np.argmax(np.abs(normal[i])))
        side = 1 if normal[i, axis] > 0 else 0
        vertices[i] = cv[i, bits[:, axis] == side]
    measure = np.full(len(local_cell), grid.h ** (grid.dim - 1))
    return FacetSet(local_cell, nonlocal_cell, normal, center, measure, vertices)


# ---------------------------------------------------------------- connectivity


def _linked_graph(grid: GridDomain, cells: np.ndarray, delta: float):
    """Sparse adjacency on ``cells``: center distance < delta, or shared face."""
    cells = np.asarray(cells, dtype=np.intp)
    n = len(cells)
    pos = np.full(grid.n_cells, -1, dtype=np.intp)
    pos[cells] = np.arange(n)
    rows, cols = [], []
    if n > 1:
        tree = cKDTree(grid.centers(cells))
        pairs = tree.query_pairs(delta * (1.0 - TIE_RTOL), output_type="ndarray")
        rows.append(pairs[:, 0])
        cols.append(pairs[:, 1])
    for axis in range(grid.dim):
        a, b = grid.face_pairs(axis)
        keep = (pos[a] >= 0) & (pos[b] >= 0)
        rows.append(pos[a[keep]])
        cols.append(pos[b[keep]])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.intp)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.intp)
    return coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))


def _components_from_graph(cells: np.ndarray, graph) -> list[np.ndarray]:
    if len(cells) == 0:
        return []
    _, lab = connected_components(graph, directed=False)
    comps = [np.sort(cells[lab == k]) for k in np.unique(lab)]
    comps.sort(key=lambda c: int(c[0]))
    return comps


def delta_connected_components(cells: np.ndarray, grid: GridDomain, delta: float) -> list[np.ndarray]:
    """Partition ``cells`` into chains with hops of center distance < delta.

    Face-adjacent cells are always linked (their closures touch), so for
    ``delta <= h`` the result is the face-adjacency partition.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    cells = np.unique(np.asarray(cells, dtype=np.intp))
    return _components_from_graph(cells, _linked_graph(grid, cells, delta))


def face_connected_components(cells: np.ndarray, grid: GridDomain) -> list[np.ndarray]:
    cells = np.unique(np.asarray(cells, dtype=np.intp))
    return _components_from_graph(cells, _linked_graph(grid, cells, 0.0))


def set_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum Euclidean distance between two point clouds (inf if either is empty)."""
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d, _ = cKDTree(b).query(a, k=1)
    return float(np.min(d))


def _face_adjacent(grid: GridDomain, a: np.ndarray, b: np.ndarray) -> bool:
    ma = np.zeros(grid.n_cells, dtype=bool)
    mb = np.zeros(grid.n_cells, dtype=bool)
    ma[a] = True
    mb[b] = True
    for axis in range(grid.dim):
        p, q = grid.face_pairs(axis)
        if np.any((ma[p] & mb[q]) | (mb[p] & ma[q])):
            return True
    return False


def _linked(grid: GridDomain, a: np.ndarray, b: np.ndarray, delta: float) -> bool:
    d = set_distance(grid.centers(a), grid.centers(b))
    return d < delta * (1.0 - TIE_RTOL) or _face_adjacent(grid, a, b)


# ---------------------------------------------------------------- admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    delta: float
    mode: str | None
    local_connected: bool
    local_components: list = field(repr=False)
    nl_components: list = field(repr=False)
    dist_local_nonlocal: float
    dist_gamma_nonlocal: float
    passes: dict
    generalized_graph_connected: bool
    touches_exterior: bool

    @property
    def ok(self) -> bool:
        """All conditions required by ``mode`` hold."""
        need = ["1", "2", "P2" if self.mode == Mode.FLUX.value else "P1"]
        return all(self.passes[k] for k in need)

    @property
    def generalized_ok(self) -> bool:
        return self.generalized_graph_connected and self.touches_exterior

    def as_records(self) -> dict[str, object]:
        rec: dict[str, object] = {
            "delta": self.delta,
            "mode": self.mode or "none",
            "local_connected": self.local_connected,
            "n_local_components": len(self.local_components),
            "n_nl_components": len(self.nl_components),
            "dist_local_nonlocal": self.dist_local_nonlocal,
            "dist_gamma_nonlocal": self.dist_gamma_nonlocal,
            "generalized_graph_connected": self.generalized_graph_connected,
            "touches_exterior": self.touches_exterior,
        }
        for k, v in self.passes.items():
            rec[f"pass_{k}"] = v
        rec["ok"] = self.ok
        return rec


def _touches_exterior(grid: GridDomain, comp: np.ndarray, delta: float) -> bool:
    ext = grid.cells_with(Label.EXTERIOR)
    if len(ext) and _linked(grid, comp, ext, delta):
        return True
    return bool(np.isin(comp, grid.boundary_cells()).any())


def _component_graph(grid: GridDomain, delta: float):
    loc_comps = face_connected_components(grid.cells_with(Label.LOCAL), grid)
    nl_comps = delta_connected_components(grid.cells_with(Label.NONLOCAL), grid, delta) \
        if len(grid.cells_with(Label.NONLOCAL)) else []
    nodes = loc_comps + nl_comps
    nl0 = len(loc_comps)
    rows, cols = [], []
    # alternating chains: only local <-> nonlocal edges
    for i in range(nl0):
        for j in range(nl0, len(nodes)):
            if _linked(grid, nodes[i], nodes[j], delta):
                rows.append(i)
                cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    n_graph, _ = connected_components(graph, directed=False) if nodes else (0, None)
    connected = n_graph == 1
    touches = any(_touches_exterior(grid, c, delta) for c in nodes)
    return loc_comps, nl_comps, connected, touches


def check_admissibility(grid: GridDomain, gamma: FacetSet | None, delta: float,
                        mode: Mode | str = Mode.SOURCE) -> AdmissibilityReport:
    """Evaluate conditions (1), (2), (P1), (P2) on the rasterized geometry.

    With an empty nonlocal region the nonlocal conditions hold vacuously.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    mode = Mode(mode)
    if gamma is None:
        gamma = extract_gamma(grid)
    loc = grid.cells_with(Label.LOCAL)
    nl = grid.cells_with(Label.NONLOCAL)
    loc_comps, nl_comps, gconn, touches = _component_graph(grid, delta)

    d_ln = set_distance(grid.centers(loc), grid.centers(nl))
    d_gn = set_distance(gamma.center, grid.centers(nl))
    tie = delta * (1.0 - TIE_RTOL)
    if len(nl) == 0:
        p1 = p2 = True
    else:
        p1 = len(loc) > 0 and (d_ln < tie or _face_adjacent(grid, loc, nl))
        p2 = d_gn < tie
    passes = {
        "1": len(loc_comps) == 1,
        "2": len(nl_comps) <= 1,
        "P1": bool(p1),
        "P2": bool(p2),
    }
    return AdmissibilityReport(
        delta=float(delta),
        mode=mode.value,
        local_connected=len(loc_comps) == 1,
        local_components=loc_comps,
        nl_components=nl_comps,
        dist_local_nonlocal=d_ln,
        dist_gamma_nonlocal=d_gn,
        passes=passes,
        generalized_graph_connected=gconn,
        touches_exterior=touches,
    )


def check_generalized_admissibility(grid: GridDomain, delta: float) -> AdmissibilityReport:
    """Multi-component variant: alternating local / nonlocal component chains.

    ``generalized_graph_connected`` is set when every pair of components is
    joined by a chain alternating between connected components of the local
    region and delta-components of the nonlocal region with consecutive
    distances < delta.
    """
    return check_admissibility(grid, None, delta, Mode.SOURCE)

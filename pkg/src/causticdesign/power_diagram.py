"""Visibility diagrams as power diagrams restricted to the source domain.

The diagram adjacency is read off the regular triangulation (lower convex
hull of the lifted sites), each source triangle is clipped against its
cells, and masses plus the sparse transport Jacobian are accumulated by the
numba kernel in ``_clip``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import ConvexHull, QhullError

from ._clip import clip_diagram
from .measures import SourceDensity, TargetMeasure
from .optics import ProblemSpec, WeightVector, to_transport_vars, weighted_point


# ---------------------------------------------------------------------------
# Regular-triangulation adjacency
# ---------------------------------------------------------------------------

def _complete_adjacency(n: int, hidden: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    alive = np.where(~hidden)[0]
    rows = []
    cols = []
    for i in alive:
        others = alive[alive != i]
        rows.append(np.full(len(others), i))
        cols.append(others)
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    return rows, cols


def regular_adjacency(points: np.ndarray, lift: np.ndarray,
                      dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR adjacency of the power diagram of (points, weights).

    ``points`` are the site coordinates restricted to ``dim`` coordinates
    (2 for the plane, 3 for the sphere) and ``lift`` is ||p||^2 + omega.
    Returns (indptr, indices, hidden); hidden sites have empty power cells
    (or are duplicates of a lower-index site).
    """
    n = len(lift)
    hidden = np.zeros(n, dtype=bool)

    L = np.column_stack([points[:, :dim], lift])
    # collapse exact duplicates onto the smallest original index
    uniq, inv = np.unique(L, axis=0, return_inverse=True)
    rep = np.full(len(uniq), n, dtype=np.int64)
    np.minimum.at(rep, inv, np.arange(n))
    hidden[np.setdiff1d(np.arange(n), rep)] = True

    rows = cols = None
    if len(uniq) >= dim + 2:
        try:
            hull = ConvexHull(uniq, qhull_options="Qt")
            lower = hull.equations[:, dim] < -1e-10
            simplices = hull.simplices[lower]
            on_lower = np.zeros(len(uniq), dtype=bool)
            on_lower[np.unique(simplices)] = True
            hidden[rep[~on_lower]] = True
            # pairwise edges of the lower facets, mapped to original indices
            pairs = set()
            for simplex in simplices:
                s = rep[simplex]
                for a in range(len(s)):
                    for b in range(a + 1, len(s)):
                        u, v = int(s[a]), int(s[b])
                        if u != v:
                            pairs.add((u, v) if u < v else (v, u))
            if pairs:
                arr = np.array(sorted(pairs), dtype=np.int64)
                rows = np.concatenate([arr[:, 0], arr[:, 1]])
                cols = np.concatenate([arr[:, 1], arr[:, 0]])
            else:
                rows = np.empty(0, dtype=np.int64)
                cols = np.empty(0, dtype=np.int64)
        except QhullError:
            rows = cols = None

    if rows is None:
        # degenerate or tiny configuration: exact but quadratic fallback
        hidden[:] = False
        hidden[np.setdiff1d(np.arange(n), rep)] = True
        rows, cols = _complete_adjacency(n, hidden)

    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr, dtype=np.int32)
    return indptr, cols.astype(np.int32), hidden


# ---------------------------------------------------------------------------
# Diagram containers
# ---------------------------------------------------------------------------

@dataclass
class VisibilityDiagram:
    """Clipped power diagram with per-cell masses and polygon soup."""

    n_cells: int
    masses: np.ndarray                 # (N,) G_i
    moments: np.ndarray                # (N, 3) integral of rho * x over cell i
    adjacency: np.ndarray              # (E, 2) realized neighbor pairs, i < j
    points: np.ndarray                 # (N, 3) weighted points
    weights: np.ndarray                # (N,) power weights
    source: SourceDensity
    partition_error: float             # max relative triangle-cover defect
    poly_verts: np.ndarray | None = None    # packed (sumV, 3)
    poly_labels: np.ndarray | None = None   # packed (sumV,) edge labels
    poly_cell: np.ndarray | None = None     # (P,)
    poly_tri: np.ndarray | None = None      # (P,)
    poly_start: np.ndarray | None = None    # (P+1,) offsets into poly_verts
    _cell_polys: dict | None = field(default=None, repr=False)

    @property
    def has_polygons(self) -> bool:
        return self.poly_verts is not None

    def cell_polygons(self, i: int) -> list[tuple[np.ndarray, int, np.ndarray]]:
        """List of (vertices, source_triangle, edge_labels) for cell i."""
        if not self.has_polygons:
            raise ValueError("diagram was built without polygon output")
        if self._cell_polys is None:
            by_cell: dict[int, list[int]] = {}
            for k, c in enumerate(self.poly_cell):
                by_cell.setdefault(int(c), []).append(k)
            self._cell_polys = by_cell
        out = []
        for k in self._cell_polys.get(int(i), []):
            lo, hi = self.poly_start[k], self.poly_start[k + 1]
            out.append((self.poly_verts[lo:hi], int(self.poly_tri[k]),
                        self.poly_labels[lo:hi]))
        return out

    def centroids(self) -> np.ndarray:
        """Density-weighted centroid per cell (NaN for empty cells)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            c = self.moments / self.masses[:, None]
        if self.source.domain_kind == "sphere":
            norm = np.linalg.norm(c, axis=1, keepdims=True)
            c = np.where(norm > 0, c / np.where(norm > 0, norm, 1.0), c)
        return c


@dataclass
class TransportState:
    """G and its sparse Jacobian in transport variables at a given psi."""

    G: np.ndarray
    jacobian: sp.csr_matrix | None
    psi_used: WeightVector
    diagram: VisibilityDiagram

    @property
    def adjacency(self) -> np.ndarray:
        return self.diagram.adjacency


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _run_kernel(points: np.ndarray, lift: np.ndarray, source: SourceDensity,
                ps_mode: int, want_jac: bool, want_polys: bool):
    mesh = source.mesh
    dim = 2 if source.domain_kind == "plane" else 3
    indptr, indices, hidden = regular_adjacency(points, lift, dim)
    grad, off = source.affine
    eps = 1e-12 * max(mesh.diameter, 1.0)

    cap_p = 8 * (len(lift) + len(mesh.faces)) + 64
    cap_v = 16 * (len(lift) + len(mesh.faces)) + 256
    while True:
        pv = np.empty((cap_v if want_polys else 1, 3))
        pl = np.empty(cap_v if want_polys else 1, dtype=np.int32)
        pc = np.empty(cap_p if want_polys else 1, dtype=np.int32)
        pt = np.empty(cap_p if want_polys else 1, dtype=np.int32)
        pn = np.empty(cap_p if want_polys else 1, dtype=np.int32)
        out = clip_diagram(
            mesh.corners, grad, off, mesh.normals,
            mesh.bfs_order, mesh.bfs_prev,
            np.ascontiguousarray(points), np.ascontiguousarray(lift),
            hidden, indptr, indices,
            ps_mode, eps, want_jac, want_polys,
            pv, pl, pc, pt, pn,
        )
        G, MOM, jac, realized, tri_cover, owner, n_poly, n_vert, overflow = out
        if not (want_polys and overflow):
            break
        cap_p *= 4
        cap_v *= 4

    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(tri_cover - mesh.areas) / np.where(mesh.areas > 0, mesh.areas, 1.0)
    partition_error = float(rel.max()) if len(rel) else 0.0

    polys = None
    if want_polys:
        start = np.zeros(n_poly + 1, dtype=np.int64)
        np.cumsum(pn[:n_poly], out=start[1:])
        polys = (pv[:n_vert].copy(), pl[:n_vert].copy(), pc[:n_poly].copy(),
                 pt[:n_poly].copy(), start)

    return G, MOM, jac, realized, indptr, indices, partition_error, polys


def restricted_power_diagram(points: np.ndarray, weights: np.ndarray,
                             source: SourceDensity,
                             want_polys: bool = True) -> VisibilityDiagram:
    """Clip the source triangulation against the power diagram of the sites."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    lift = np.einsum("ij,ij->i", points, points) + weights
    ps_mode = 0 if source.domain_kind == "plane" else 1
    G, MOM, _, realized, indptr, indices, perr, polys = _run_kernel(
        points, lift, source, ps_mode, False, want_polys)

    pairs = _realized_pairs(indptr, indices, realized)
    diag = VisibilityDiagram(
        n_cells=len(weights), masses=G, moments=MOM, adjacency=pairs,
        points=points, weights=weights, source=source, partition_error=perr)
    if polys is not None:
        diag.poly_verts, diag.poly_labels, diag.poly_cell, diag.poly_tri, diag.poly_start = polys
    return diag


def _realized_pairs(indptr: np.ndarray, indices: np.ndarray,
                    realized: np.ndarray) -> np.ndarray:
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    mask = realized.astype(bool)
    i, j = rows[mask], indices[mask]
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    if len(lo) == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.column_stack([lo, hi]), axis=0)


def cell_mass(polygons: "list[tuple[np.ndarray, int]] | list", source: SourceDensity) -> float:
    """Integral of the density over a cell given as (vertices, triangle) pairs.

    Polygons are fan-triangulated; the integrand is affine on each source
    triangle so area x density(centroid) is exact per fan triangle.
    """
    grad, off = source.affine
    total = 0.0
    for item in polygons:
        verts, tri = item[0], item[1]
        verts = np.asarray(verts, dtype=np.float64)
        n = source.mesh.normals[tri]
        v0 = verts[0]
        for k in range(1, len(verts) - 1):
            a = 0.5 * np.dot(np.cross(verts[k] - v0, verts[k + 1] - v0), n)
            centroid = (v0 + verts[k] + verts[k + 1]) / 3.0
            total += a * (np.dot(grad[tri], centroid) + off[tri])
    return float(total)


def evaluate_G(spec: ProblemSpec, psi, source: SourceDensity,
               targets: TargetMeasure, want_jac: bool = True,
               want_polys: bool = False) -> TransportState:
    """Masses G(psi) and the Jacobian dG/d(psi-tilde) on the diagram adjacency.

    The Jacobian is assembled from exact line integrals over the realized
    bisector edges, symmetrized, with diagonal = -(row sum); it is therefore
    symmetric with exact zero row sums, and negative semidefinite in the
    transport variables for every variant.
    """
    vec = psi if isinstance(psi, WeightVector) else WeightVector(np.asarray(psi))
    natural = vec.natural(spec)
    points, weights = weighted_point(spec, targets.directions, natural)
    lift = np.einsum("ij,ij->i", points, points) + weights
    ps_mode = 0 if source.domain_kind == "plane" else 1

    G, MOM, jac, realized, indptr, indices, perr, polys = _run_kernel(
        points, lift, source, ps_mode, want_jac, want_polys)

    pairs = _realized_pairs(indptr, indices, realized)
    diag = VisibilityDiagram(
        n_cells=targets.count, masses=G, moments=MOM, adjacency=pairs,
        points=points, weights=weights, source=source, partition_error=perr)
    if polys is not None:
        diag.poly_verts, diag.poly_labels, diag.poly_cell, diag.poly_tri, diag.poly_start = polys

    jmat = None
    if want_jac:
        n = targets.count
        off = sp.csr_matrix((jac, indices, indptr), shape=(n, n))
        off = (off + off.T) * 0.5
        row_sums = np.asarray(off.sum(axis=1)).ravel()
        jmat = (off - sp.diags(row_sums)).tocsr()

    return TransportState(G=G, jacobian=jmat,
                          psi_used=WeightVector(natural.copy(), "natural"),
                          diagram=diag)

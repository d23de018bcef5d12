"""Triangulated support domains: planar rectangles and spherical caps.

The solver only ever sees a triangle soup; these helpers build structured
meshes for the two supported domain kinds and precompute the per-triangle
bookkeeping (areas, normals, breadth-first processing order) that the
restricted power-diagram kernel needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupport


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------

@dataclass
class TriMesh:
    """Indexed triangle mesh with cached quantities used by the clipper.

    vertices : (V, 3) float64
    faces    : (F, 3) int32, counter-clockwise w.r.t. the face normal
    """

    vertices: np.ndarray
    faces: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) triangle corner coordinates."""
        if "corners" not in self._cache:
            self._cache["corners"] = np.ascontiguousarray(self.vertices[self.faces])
        return self._cache["corners"]

    @property
    def normals(self) -> np.ndarray:
        """(F, 3) unit face normals."""
        if "normals" not in self._cache:
            c = self.corners
            n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
            self._cache["areas"] = 0.5 * np.linalg.norm(n, axis=1)
            with np.errstate(invalid="ignore"):
                n = n / np.linalg.norm(n, axis=1, keepdims=True)
            self._cache["normals"] = np.ascontiguousarray(n)
        return self._cache["normals"]

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            _ = self.normals
        return self._cache["areas"]

    @property
    def centroids(self) -> np.ndarray:
        if "centroids" not in self._cache:
            self._cache["centroids"] = np.ascontiguousarray(self.corners.mean(axis=1))
        return self._cache["centroids"]

    @property
    def diameter(self) -> float:
        if "diameter" not in self._cache:
            lo = self.vertices.min(axis=0)
            hi = self.vertices.max(axis=0)
            self._cache["diameter"] = float(np.linalg.norm(hi - lo))
        return self._cache["diameter"]

    @property
    def bfs_order(self) -> np.ndarray:
        """(F,) int32 triangle processing order (breadth-first over shared edges)."""
        self._build_bfs()
        return self._cache["bfs_order"]

    @property
    def bfs_prev(self) -> np.ndarray:
        """(F,) int32; for each face, an already-processed edge-neighbor or -1."""
        self._build_bfs()
        return self._cache["bfs_prev"]

    def _build_bfs(self) -> None:
        if "bfs_order" in self._cache:
            return
        nf = len(self.faces)
        edge_map: dict[tuple[int, int], int] = {}
        neighbors: list[list[int]] = [[] for _ in range(nf)]
        for t, (a, b, c) in enumerate(self.faces):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                other = edge_map.pop(key, None)
                if other is None:
                    edge_map[key] = t
                else:
                    neighbors[t].append(other)
                    neighbors[other].append(t)
        order = np.empty(nf, dtype=np.int32)
        prev = np.full(nf, -1, dtype=np.int32)
        seen = np.zeros(nf, dtype=bool)
        pos = 0
        for start in range(nf):
            if seen[start]:
                continue
            seen[start] = True
            queue = [start]
            qi = 0
            while qi < len(queue):
                t = queue[qi]
                qi += 1
                order[pos] = t
                pos += 1
                for nb in neighbors[t]:
                    if not seen[nb]:
                        seen[nb] = True
                        prev[nb] = t
                        queue.append(nb)
        self._cache["bfs_order"] = order
        self._cache["bfs_prev"] = prev

    def affine_coefficients(self, corner_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-face (gradient, offset) of the affine interpolant of corner values.

        Returns (F, 3) in-plane gradients g and (F,) offsets h with
        value(x) = <g, x> + h exactly at the three corners.
        """
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        det = np.where(np.abs(det) < 1e-300, 1.0, det)
        r1 = corner_values[:, 1] - corner_values[:, 0]
        r2 = corner_values[:, 2] - corner_values[:, 0]
        a = (g22 * r1 - g12 * r2) / det
        b = (g11 * r2 - g12 * r1) / det
        grad = a[:, None] * e1 + b[:, None] * e2
        off = corner_values[:, 0] - np.einsum("ij,ij->i", grad, c[:, 0])
        return np.ascontiguousarray(grad), np.ascontiguousarray(off)


# ---------------------------------------------------------------------------
# Planar rectangle
# ---------------------------------------------------------------------------

def rect_mesh(center: tuple[float, float] = (0.0, 0.0),
              width: float = 1.0,
              height: float = 1.0,
              resolution: int = 16) -> TriMesh:
    """Structured triangulation of an axis-aligned rectangle in the z=0 plane.

    ``resolution`` is the number of cells along the longer side; each grid cell
    is split into two triangles oriented counter-clockwise (+e_z normals).
    """
    if width <= 0 or height <= 0 or resolution < 1:
        raise ValueError("rectangle must have positive size and resolution")
    nx = max(1, round(resolution * width / max(width, height)))
    ny = max(1, round(resolution * height / max(width, height)))
    xs = center[0] + np.linspace(-width / 2, width / 2, nx + 1)
    ys = center[1] + np.linspace(-height / 2, height / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i: int, j: int) -> int:
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(verts, np.array(faces, dtype=np.int32))


# ---------------------------------------------------------------------------
# Spherical cap (subdivided icosahedron)
# ---------------------------------------------------------------------------

def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    return verts, faces


def icosphere(level: int) -> TriMesh:
    """Unit sphere from an icosahedron subdivided ``level`` times."""
    verts, faces = _icosahedron()
    vlist = [tuple(v) for v in verts]
    vindex = {v: i for i, v in enumerate(vlist)}
    verts = list(map(np.asarray, vlist))

    def midpoint(i: int, j: int, cache: dict) -> int:
        key = (i, j) if i < j else (j, i)
        if key in cache:
            return cache[key]
        m = _unit(verts[i] + verts[j])
        idx = vindex.get(tuple(m))
        if idx is None:
            idx = len(verts)
            verts.append(m)
            vindex[tuple(m)] = idx
        cache[key] = idx
        return idx

    for _ in range(level):
        cache: dict = {}
        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b, cache)
            bc = midpoint(b, c, cache)
            ca = midpoint(c, a, cache)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new_faces, dtype=np.int64)

    varr = np.array(verts)
    # outward orientation: normals point away from the origin
    corners = varr[faces]
    n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    flip = np.einsum("ij,ij->i", n, corners.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, ::-1]
    return TriMesh(varr, faces.astype(np.int32))


def cap_mesh(axis: np.ndarray | tuple = (0.0, 0.0, 1.0),
             half_angle: float = np.pi / 6,
             level: int = 5,
             keep: "callable | None" = None) -> TriMesh:
    """Spherical cap around ``axis`` with the given half-angle (radians).

    Keeps the icosphere triangles whose three vertices all lie inside the cap;
    an optional ``keep(points) -> bool mask`` predicate filters triangles
    further (it receives the (F, 3, 3) corner array and must accept each
    triangle as a whole).
    """
    axis = _unit(np.asarray(axis, dtype=np.float64))
    sphere = icosphere(level)
    cos_cap = np.cos(half_angle)
    inside = (sphere.vertices @ axis) >= cos_cap - 1e-12
    face_ok = inside[sphere.faces].all(axis=1)
    if keep is not None:
        face_ok &= keep(sphere.vertices[sphere.faces])
    faces = sphere.faces[face_ok]
    if len(faces) == 0:
        raise EmptySupport("spherical cap too small for this subdivision level")
    used = np.unique(faces)
    remap = np.full(len(sphere.vertices), -1, dtype=np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    return TriMesh(sphere.vertices[used], remap[faces])


# ---------------------------------------------------------------------------
# Regions (used by blend_with_uniform to describe enlarged supports)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned rectangle in the z=0 plane."""
    center: tuple[float, float] = (0.0, 0.0)
    width: float = 1.0
    height: float = 1.0

    def build_mesh(self, resolution: int = 16) -> TriMesh:
        return rect_mesh(self.center, self.width, self.height, resolution)

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        dx = np.abs(pts[:, 0] - self.center[0])
        dy = np.abs(pts[:, 1] - self.center[1])
        return (dx <= self.width / 2 + tol) & (dy <= self.height / 2 + tol)


@dataclass(frozen=True)
class CapRegion:
    """Spherical cap; ``forbidden`` optionally removes triangles (PS-lens guard)."""
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    half_angle: float = np.pi / 6
    level: int = 5
    forbidden: "callable | None" = None

    def build_mesh(self, resolution: int | None = None) -> TriMesh:
        level = self.level if resolution is None else resolution
        keep = None
        if self.forbidden is not None:
            keep = lambda corners: ~self.forbidden(corners).any(axis=1)
        return cap_mesh(self.axis, self.half_angle, level, keep=keep)

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        axis = _unit(np.asarray(self.axis, dtype=np.float64))
        dirs = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        ok = dirs @ axis >= np.cos(self.half_angle) - tol
        if self.forbidden is not None:
            ok &= ~self.forbidden(dirs)
        return ok

"""Triangulated optical surfaces from solved weights, with Snell-exact
per-corner normals, plus OBJ/PLY export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCellMesh
from .measures import TargetMeasure
from .optics import ProblemSpec, WeightVector, facet_slope, normal_from_snell
from .power_diagram import VisibilityDiagram

EZ = np.array([0.0, 0.0, 1.0])


@dataclass
class TriangleMesh:
    """Triangle soup with per-corner normals and per-face cell tags."""

    vertices: np.ndarray        # (V, 3)
    faces: np.ndarray           # (F, 3) int
    corner_normals: np.ndarray  # (F, 3, 3), one unit normal per face corner
    face_cell: np.ndarray       # (F,) target index of the facet

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.corner_normals = np.asarray(self.corner_normals, dtype=np.float64)
        self.face_cell = np.asarray(self.face_cell, dtype=np.int64)

    @property
    def face_corners(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        c = self.face_corners
        return 0.5 * np.linalg.norm(
            np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


# ---------------------------------------------------------------------------
# Lifting helpers
# ---------------------------------------------------------------------------

def _lift(spec: ProblemSpec, targets: TargetMeasure, psi: np.ndarray,
          cell: int, pts: np.ndarray) -> np.ndarray:
    """Lift domain points onto cell ``cell``'s facet / primitive surface."""
    y = targets.directions
    if spec.source_kind == "collimated":
        slope = facet_slope(spec, y[cell:cell + 1])[0]
        z = pts[:, :2] @ slope
        z = z + psi[cell] if spec.is_union else z - psi[cell]
        return np.column_stack([pts[:, 0], pts[:, 1], z])
    xhat = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    dots = xhat @ y[cell]
    a = (1.0 - dots) if spec.component == "mirror" else (spec.kappa * dots - 1.0)
    return (psi[cell] / a)[:, None] * xhat


def _dedupe_loop(verts: np.ndarray, tol: float) -> np.ndarray:
    """Drop consecutive (and closing) duplicate vertices of a polygon loop."""
    keep = [0]
    for k in range(1, len(verts)):
        if np.linalg.norm(verts[k] - verts[keep[-1]]) > tol:
            keep.append(k)
    while len(keep) > 1 and np.linalg.norm(verts[keep[-1]] - verts[keep[0]]) <= tol:
        keep.pop()
    return verts[keep]


def _rho_centroid(verts: np.ndarray, tri: int, source) -> np.ndarray:
    """Density-weighted centroid of a polygon inside one source triangle."""
    grad, off = source.affine
    n = source.mesh.normals[tri]
    mass = 0.0
    mom = np.zeros(3)
    v0 = verts[0]
    r = verts @ grad[tri] + off[tri]
    for k in range(1, len(verts) - 1):
        a = 0.5 * np.dot(np.cross(verts[k] - v0, verts[k + 1] - v0), n)
        tsum = v0 + verts[k] + verts[k + 1]
        mass += a * (r[0] + r[k] + r[k + 1]) / 3.0
        mom += a / 12.0 * (r[0] * (v0 + tsum) + r[k] * (verts[k] + tsum)
                           + r[k + 1] * (verts[k + 1] + tsum))
    if mass <= 0:
        return verts.mean(axis=0)
    return mom / mass


# ---------------------------------------------------------------------------
# Mesh construction
# ---------------------------------------------------------------------------

def build_mesh(spec: ProblemSpec, targets: TargetMeasure, psi,
               diagram: VisibilityDiagram, subdivision: int = 0) -> TriangleMesh:
    """Lift each visibility-cell polygon onto the optical surface.

    Every polygon is fan-triangulated from its density-weighted centroid
    (plain triangles stay single faces); ``subdivision`` levels of midpoint
    refinement re-lift interior vertices onto the curved primitive, which
    matters for the point-source variants. Corner normals are exact via
    Snell's law from the cell's incident ray and outgoing direction.
    """
    if not diagram.has_polygons:
        raise ValueError("diagram was built without polygons; "
                         "rerun evaluate_G/restricted_power_diagram with want_polys=True")
    vec = psi if isinstance(psi, WeightVector) else WeightVector(np.asarray(psi))
    values = vec.natural(spec)
    source = diagram.source
    tol = 1e-12 * max(source.mesh.diameter, 1.0)

    verts_out: list[np.ndarray] = []
    faces_out: list[tuple[int, int, int]] = []
    cells_out: list[int] = []
    offset = 0

    empty = np.ones(diagram.n_cells, dtype=bool)
    for i in range(diagram.n_cells):
        for poly, tri, _labels in diagram.cell_polygons(i):
            loop = _dedupe_loop(poly, tol)
            if len(loop) < 3:
                continue
            empty[i] = False
            # domain-space fan, optionally subdivided, then lifted
            if len(loop) == 3:
                base = [loop]
            else:
                center = _rho_centroid(loop, tri, source)
                base = [np.array([center, loop[k], loop[(k + 1) % len(loop)]])
                        for k in range(len(loop))]
            tris = []
            for t in base:
                tris.extend(_subdivide(t, subdivision))
            for t in tris:
                lifted = _lift(spec, targets, values, i, np.asarray(t))
                verts_out.append(lifted)
                faces_out.append((offset, offset + 1, offset + 2))
                cells_out.append(i)
                offset += 3
    if empty.any():
        raise EmptyCellMesh(f"{int(empty.sum())} cells have no polygons")

    vertices = np.vstack(verts_out)
    faces = np.array(faces_out, dtype=np.int64)
    face_cell = np.array(cells_out, dtype=np.int64)

    y = targets.directions
    corners = vertices[faces]
    if spec.source_kind == "collimated":
        d = np.broadcast_to(EZ, corners.shape)
    else:
        d = corners / np.linalg.norm(corners, axis=2, keepdims=True)
    normals = normal_from_snell(spec, d, y[face_cell][:, None, :])
    return TriangleMesh(vertices, faces, normals, face_cell)


def _subdivide(tri: np.ndarray, levels: int) -> list[np.ndarray]:
    tris = [np.asarray(tri, dtype=np.float64)]
    for _ in range(levels):
        nxt = []
        for t in tris:
            m01 = 0.5 * (t[0] + t[1])
            m12 = 0.5 * (t[1] + t[2])
            m20 = 0.5 * (t[2] + t[0])
            nxt += [np.array([t[0], m01, m20]), np.array([m01, t[1], m12]),
                    np.array([m20, m12, t[2]]), np.array([m01, m12, m20])]
        tris = nxt
    return tris


# ---------------------------------------------------------------------------
# OBJ / PLY export
# ---------------------------------------------------------------------------

def export_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """Write `v`/`vn`/`f v//vn` records with full float precision.

    Vertex order follows cell then polygon construction order; duplicate
    normals are shared to keep files small.
    """
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    normal_index: dict[bytes, int] = {}
    corner_ids = np.empty(mesh.corner_normals.shape[:2], dtype=np.int64)
    for f in range(len(mesh.faces)):
        for c in range(3):
            n = mesh.corner_normals[f, c]
            key = n.tobytes()
            idx = normal_index.get(key)
            if idx is None:
                idx = len(normal_index) + 1
                normal_index[key] = idx
                lines.append(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}")
            corner_ids[f, c] = idx
    for f, face in enumerate(mesh.faces):
        a, b, c = face + 1
        lines.append(f"f {a}//{corner_ids[f,0]} {b}//{corner_ids[f,1]} {c}//{corner_ids[f,2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path: str | Path) -> TriangleMesh:
    """Read the subset of OBJ written by export_obj (v, vn, f v//vn)."""
    verts: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[int]] = []
    face_normals: list[list[int]] = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            vi, ni = [], []
            for token in parts[1:4]:
                fields = token.split("/")
                vi.append(int(fields[0]) - 1)
                ni.append(int(fields[-1]) - 1 if fields[-1] else 0)
            faces.append(vi)
            face_normals.append(ni)
    v = np.array(verts)
    f = np.array(faces, dtype=np.int64)
    if normals:
        n = np.array(normals)[np.array(face_normals, dtype=np.int64)]
    else:
        c = v[f]
        geo = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        geo /= np.linalg.norm(geo, axis=1, keepdims=True)
        n = np.repeat(geo[:, None, :], 3, axis=1)
    return TriangleMesh(v, f, n, np.zeros(len(f), dtype=np.int64))


def export_ply(mesh: TriangleMesh, path: str | Path) -> None:
    """Binary little-endian PLY with per-corner vertices and normals."""
    nf = len(mesh.faces)
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {3 * nf}",
        "property double x", "property double y", "property double z",
        "property double nx", "property double ny", "property double nz",
        f"element face {nf}",
        "property list uchar int vertex_indices",
        "end_header",
    ]) + "\n"
    vdata = np.empty((3 * nf, 6))
    vdata[:, :3] = mesh.vertices[mesh.faces].reshape(-1, 3)
    vdata[:, 3:] = mesh.corner_normals.reshape(-1, 3)
    fdata = np.empty(nf, dtype=[("n", "u1"), ("idx", "<i4", 3)])
    fdata["n"] = 3
    fdata["idx"] = np.arange(3 * nf, dtype=np.int32).reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(vdata.astype("<f8").tobytes())
        fh.write(fdata.tobytes())

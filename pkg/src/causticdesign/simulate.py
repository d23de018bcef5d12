"""Forward ray-tracing verifier.

Rays are sampled from the source density, traced against the triangulated
component via an axis-aligned BVH, reflected or refracted with the variant's
Snell ratio, and binned on the target atoms (and optionally accumulated on a
physical screen raster). The resulting histogram is compared against the
prescribed masses with the total-variation distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._trace import traverse
from .errors import DimensionMismatch, NoIntersectionMesh
from .measures import SourceDensity, TargetMeasure, TargetScreen
from .optics import ProblemSpec, reflect, refract_many
from .surface import TriangleMesh

EZ = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# Source sampling
# ---------------------------------------------------------------------------

def sample_source_points(source: SourceDensity, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw points from the density: stratified over triangles by mass
    (largest-remainder counts), uniform barycentric draws within a triangle,
    thinned by rejection against the affine density."""
    masses = source.triangle_masses
    quota = masses / masses.sum() * count
    counts = np.floor(quota).astype(np.int64)
    short = count - counts.sum()
    if short > 0:
        order = np.argsort(-(quota - counts))
        counts[order[:short]] += 1

    corners = source.mesh.corners
    dens = source.corner_density
    out = np.empty((count, 3))
    pos = 0
    for t in np.flatnonzero(counts):
        need = int(counts[t])
        a, b, c = corners[t]
        ra, rb, rc = dens[t]
        rmax = max(ra, rb, rc)
        got = 0
        while got < need:
            m = max(need - got, 16)
            u = rng.random(m)
            v = rng.random(m)
            flip = u + v > 1.0
            u[flip] = 1.0 - u[flip]
            v[flip] = 1.0 - v[flip]
            rho = ra + u * (rb - ra) + v * (rc - ra)
            acc = rng.random(m) * rmax <= rho
            pts = a + u[acc, None] * (b - a) + v[acc, None] * (c - a)
            take = min(len(pts), need - got)
            out[pos + got: pos + got + take] = pts[:take]
            got += take
        pos += need
    return out


def sample_rays(spec: ProblemSpec, source: SourceDensity, count: int,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Ray origins and unit directions for the variant's source model."""
    pts = sample_source_points(source, count, rng)
    if spec.source_kind == "collimated":
        dirs = np.broadcast_to(EZ, pts.shape).copy()
        return pts, dirs
    dirs = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return np.zeros_like(dirs), dirs


# ---------------------------------------------------------------------------
# BVH
# ---------------------------------------------------------------------------

@dataclass
class _BVH:
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray      # child id, or -1 for leaves
    node_right: np.ndarray
    node_start: np.ndarray     # leaf triangle range into `order`
    node_count: np.ndarray
    order: np.ndarray
    tri_a: np.ndarray
    tri_e1: np.ndarray
    tri_e2: np.ndarray


def build_bvh(mesh: TriangleMesh, leaf_size: int = 8) -> _BVH:
    corners = mesh.face_corners
    lo = corners.min(axis=1)
    hi = corners.max(axis=1)
    centers = corners.mean(axis=1)
    order = np.arange(len(corners))

    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []

    def new_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_left) - 1

    root = new_node()
    stack = [(root, 0, len(order))]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        node_min[node] = lo[idx].min(axis=0)
        node_max[node] = hi[idx].max(axis=0)
        if e - s <= leaf_size:
            node_start[node] = s
            node_count[node] = e - s
            continue
        ext = centers[idx].max(axis=0) - centers[idx].min(axis=0)
        axis = int(np.argmax(ext))
        half = (e - s) // 2
        part = np.argpartition(centers[idx, axis], half)
        order[s:e] = idx[part]
        lc, rc = new_node(), new_node()
        node_left[node] = lc
        node_right[node] = rc
        stack.append((lc, s, s + half))
        stack.append((rc, s + half, e))

    tri = corners[order]
    return _BVH(np.ascontiguousarray(node_min, dtype=np.float64),
                np.ascontiguousarray(node_max, dtype=np.float64),
                np.ascontiguousarray(node_left, dtype=np.int64),
                np.ascontiguousarray(node_right, dtype=np.int64),
                np.ascontiguousarray(node_start, dtype=np.int64),
                np.ascontiguousarray(node_count, dtype=np.int64),
                np.ascontiguousarray(order, dtype=np.int64),
                np.ascontiguousarray(tri[:, 0]),
                np.ascontiguousarray(tri[:, 1] - tri[:, 0]),
                np.ascontiguousarray(tri[:, 2] - tri[:, 0]))


def bvh_intersect(bvh: _BVH, origins: np.ndarray, dirs: np.ndarray,
                  t_min: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """First-hit query for a ray batch.

    Returns (t, face, u, v): hit parameter (inf when missed), triangle index
    in mesh order, and barycentric coordinates of the hit.
    """
    return traverse(bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
                    bvh.node_start, bvh.node_count, bvh.order,
                    bvh.tri_a, bvh.tri_e1, bvh.tri_e2,
                    np.ascontiguousarray(origins), np.ascontiguousarray(dirs),
                    t_min)


# ---------------------------------------------------------------------------
# Tracing
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    """Binned outgoing energy and its distance to the prescribed target."""

    histogram: np.ndarray          # (N,) fraction of emitted rays per atom
    escaped: int
    rays: int
    tv_distance: float
    screen_image: np.ndarray | None = None
    per_atom_deviation: np.ndarray | None = None

    @property
    def escaped_fraction(self) -> float:
        return self.escaped / self.rays

    def summary(self) -> dict:
        worst = None
        if self.per_atom_deviation is not None:
            k = int(np.argmax(np.abs(self.per_atom_deviation)))
            worst = {"atom": k, "deviation": float(self.per_atom_deviation[k])}
        return {
            "rays": self.rays,
            "escaped_fraction": self.escaped_fraction,
            "tv_distance": self.tv_distance,
            "worst_atom": worst,
        }


def compare(result: "SimulationResult | np.ndarray", targets: TargetMeasure) -> float:
    """Total-variation distance between a histogram and the target masses."""
    hist = result.histogram if isinstance(result, SimulationResult) else np.asarray(result)
    if len(hist) != targets.count:
        raise DimensionMismatch(
            f"histogram has {len(hist)} atoms, target has {targets.count}")
    return 0.5 * float(np.abs(hist - targets.masses).sum())


def trace(mesh: TriangleMesh, spec: ProblemSpec, source: SourceDensity,
          targets: TargetMeasure, rays: int, seed: int = 0,
          use_corner_normals: bool = False,
          screen: TargetScreen | None = None,
          screen_shape: tuple[int, int] | None = None,
          batch_size: int = 1_000_000) -> SimulationResult:
    """Trace ``rays`` source samples through the mesh and bin the output.

    Far-field targets bin by nearest direction, near-field targets by
    nearest screen atom; a screen raster is accumulated when ``screen`` and
    ``screen_shape`` are given. Total internal reflection and rays missing
    the mesh count as escaped. Identical (seed, rays) reproduce identical
    histograms.
    """
    if rays < 1:
        raise ValueError("need at least one ray")
    rng = np.random.default_rng(seed)
    bvh = build_bvh(mesh)
    corners = mesh.face_corners
    geo_n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    geo_n /= np.maximum(np.linalg.norm(geo_n, axis=1, keepdims=True), 1e-300)

    if targets.kind == "far_field":
        atom_tree = cKDTree(targets.directions)
    else:
        atom_tree = cKDTree(targets.points)

    img = None
    frame = None
    if screen is not None and screen_shape is not None:
        img = np.zeros(screen_shape)
        frame = screen.frame()

    # collimated rays are vertical lines; launch them below the component so
    # the first hit is found wherever the free height offset placed it
    launch_z = None
    if spec.source_kind == "collimated":
        zmin = float(mesh.vertices[:, 2].min())
        zmax = float(mesh.vertices[:, 2].max())
        launch_z = zmin - max(1e-6, 0.05 * (zmax - zmin + 1.0))

    counts = np.zeros(targets.count, dtype=np.int64)
    escaped = 0
    done = 0
    while done < rays:
        m = min(batch_size, rays - done)
        o, d = sample_rays(spec, source, m, rng)
        if launch_z is not None:
            o[:, 2] = launch_z
        t, f, u, v = bvh_intersect(bvh, o, d)
        hit = f >= 0
        escaped += int((~hit).sum())
        o, d, t, f, u, v = o[hit], d[hit], t[hit], f[hit], u[hit], v[hit]
        x = o + t[:, None] * d

        if use_corner_normals:
            cn = mesh.corner_normals[f]
            n = (1 - u - v)[:, None] * cn[:, 0] + u[:, None] * cn[:, 1] + v[:, None] * cn[:, 2]
            n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        else:
            n = geo_n[f]
        flip = np.einsum("ij,ij->i", n, d) > 0
        n = np.where(flip[:, None], -n, n)

        if spec.component == "mirror":
            out = reflect(d, n)
            ok = np.ones(len(out), dtype=bool)
        else:
            out, ok = refract_many(d, n, spec.snell_ratio)
        escaped += int((~ok).sum())
        out, x = out[ok], x[ok]
        out /= np.maximum(np.linalg.norm(out, axis=1, keepdims=True), 1e-300)

        if targets.kind == "far_field":
            _, idx = atom_tree.query(out)
        else:
            hitpt, fine = _screen_hits(x, out, targets.screen or screen)
            escaped += int((~fine).sum())
            hitpt = hitpt[fine]
            _, idx = atom_tree.query(hitpt)
            if img is not None:
                _accumulate_raster(img, hitpt, screen, frame)
        np.add.at(counts, idx, 1)

        if img is not None and targets.kind == "far_field":
            hitpt, fine = _screen_hits(x, out, screen)
            _accumulate_raster(img, hitpt[fine], screen, frame)
        done += m

    if escaped > rays * 0.5:
        raise NoIntersectionMesh(
            f"{escaped}/{rays} rays missed the component; check the geometry")

    hist = counts / rays
    dev = hist - targets.masses
    tv = 0.5 * float(np.abs(dev).sum())
    return SimulationResult(histogram=hist, escaped=escaped, rays=rays,
                            tv_distance=tv, screen_image=img,
                            per_atom_deviation=dev)


def _screen_hits(x: np.ndarray, out: np.ndarray,
                 screen: TargetScreen) -> tuple[np.ndarray, np.ndarray]:
    ax, _, _ = screen.frame()
    center = screen.distance * ax
    denom = out @ ax
    ok = np.abs(denom) > 1e-12
    t = np.where(ok, ((center - x) @ ax) / np.where(ok, denom, 1.0), -1.0)
    ok &= t > 0
    return x + t[:, None] * out, ok


def _accumulate_raster(img: np.ndarray, pts: np.ndarray, screen: TargetScreen,
                       frame: tuple) -> None:
    ax, right, up = frame
    center = screen.distance * ax
    rel = pts - center
    uu = rel @ right
    vv = rel @ up
    rows, cols = img.shape
    c = np.floor((uu / screen.width + 0.5) * cols).astype(np.int64)
    r = np.floor((0.5 - vv / screen.height) * rows).astype(np.int64)
    keep = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
    np.add.at(img, (r[keep], c[keep]), 1.0)

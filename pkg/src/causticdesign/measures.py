"""Source and target light distributions in solver-ready, normalized form.

The source is a triangulated domain (planar rectangle or spherical cap)
carrying a per-vertex density that is affine on each triangle; the target is
a finite set of weighted Dirac atoms, either directions on the unit sphere
(far field) or points in space (near field).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .domains import CapRegion, RectRegion, TriMesh, cap_mesh, rect_mesh, _unit
from .errors import AllBlackImage, EmptySupport, HemisphereViolation
from .images import read_grayscale

MASS_TOL = 1e-12


# ---------------------------------------------------------------------------
# Source density
# ---------------------------------------------------------------------------

@dataclass
class SourceDensity:
    """Normalized density, affine per triangle, over a plane or sphere domain."""

    domain_kind: str                  # "plane" | "sphere"
    mesh: TriMesh
    vertex_density: np.ndarray        # (V,) nonnegative
    region: "RectRegion | CapRegion | None" = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.domain_kind not in ("plane", "sphere"):
            raise ValueError(f"unknown domain kind {self.domain_kind!r}")
        self.vertex_density = np.asarray(self.vertex_density, dtype=np.float64)
        if np.any(self.vertex_density < 0):
            raise ValueError("vertex densities must be nonnegative")
        if self.domain_kind == "plane" and np.any(self.mesh.vertices[:, 2] != 0.0):
            raise ValueError("plane domain vertices must have z = 0")
        total = self.triangle_masses.sum()
        if total <= 0:
            raise EmptySupport("source density integrates to zero")
        self.vertex_density = self.vertex_density / total
        self._cache.clear()

    # -- exact integration of the affine density --------------------------

    @property
    def corner_density(self) -> np.ndarray:
        """(F, 3) density at triangle corners."""
        if "corner_density" not in self._cache:
            self._cache["corner_density"] = np.ascontiguousarray(
                self.vertex_density[self.mesh.faces])
        return self._cache["corner_density"]

    @property
    def triangle_masses(self) -> np.ndarray:
        """(F,) exact integral of the affine density per triangle."""
        return self.mesh.areas * self.corner_density.mean(axis=1)

    @property
    def total_mass(self) -> float:
        return float(self.triangle_masses.sum())

    @property
    def affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-triangle (gradient, offset) with rho(x) = <g,x> + h on the triangle."""
        if "affine" not in self._cache:
            self._cache["affine"] = self.mesh.affine_coefficients(self.corner_density)
        return self._cache["affine"]

    # -- point evaluation ---------------------------------------------------

    def _locator(self) -> cKDTree:
        if "tree" not in self._cache:
            self._cache["tree"] = cKDTree(self.mesh.centroids)
        return self._cache["tree"]

    def locate(self, pts: np.ndarray, k: int = 16) -> np.ndarray:
        """Index of the triangle containing each point (-1 if outside).

        Points off the exact surface (e.g. on the unit sphere rather than the
        chordal mesh) are matched by projection onto the candidate triangles.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        kq = min(k, len(self.mesh.faces))
        _, cand = self._locator().query(pts, k=kq)
        cand = np.atleast_2d(cand.reshape(len(pts), -1))
        corners = self.mesh.corners
        out = np.full(len(pts), -1, dtype=np.int64)
        scale = max(self.mesh.diameter, 1.0)
        for col in range(cand.shape[1]):
            need = out < 0
            if not need.any():
                break
            tri = cand[need, col]
            a, b, c = corners[tri, 0], corners[tri, 1], corners[tri, 2]
            p = pts[need]
            v0, v1, v2 = b - a, c - a, p - a
            d00 = np.einsum("ij,ij->i", v0, v0)
            d01 = np.einsum("ij,ij->i", v0, v1)
            d11 = np.einsum("ij,ij->i", v1, v1)
            d20 = np.einsum("ij,ij->i", v2, v0)
            d21 = np.einsum("ij,ij->i", v2, v1)
            det = d00 * d11 - d01 * d01
            det = np.where(np.abs(det) < 1e-300, 1.0, det)
            u = (d11 * d20 - d01 * d21) / det
            v = (d00 * d21 - d01 * d20) / det
            tol = 1e-9
            inside = (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol)
            # reject points far off the triangle plane (scaled tolerance)
            n = np.cross(v0, v1)
            nn = np.linalg.norm(n, axis=1)
            nn = np.where(nn < 1e-300, 1.0, nn)
            dist = np.abs(np.einsum("ij,ij->i", v2, n)) / nn
            inside &= dist <= 1e-6 * scale + 1e-12
            hit = np.where(need)[0][inside]
            out[hit] = tri[inside]
        return out

    def density_at(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate the normalized density (0 outside the support)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.domain_kind == "sphere":
            pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
            # evaluate on the chordal mesh
            tri = self.locate(pts)
        else:
            tri = self.locate(pts)
        grad, off = self.affine
        val = np.zeros(len(pts))
        ok = tri >= 0
        val[ok] = np.einsum("ij,ij->i", grad[tri[ok]], pts[ok]) + off[tri[ok]]
        return np.maximum(val, 0.0)


# ---------------------------------------------------------------------------
# Target measure and screen geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetScreen:
    """Planar screen used to lay out image pixels as directions or points.

    The screen is orthogonal to ``axis`` at ``distance`` from the origin;
    pixel (0, 0) is the top-left cell of the image.
    """

    distance: float = 2.0
    width: float = 0.6
    height: float = 0.6
    axis: tuple[float, float, float] = (0.0, 0.0, -1.0)

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ax = _unit(np.asarray(self.axis, dtype=np.float64))
        hint = np.array([0.0, 1.0, 0.0]) if abs(ax[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
        right = _unit(np.cross(hint, ax))
        up = np.cross(ax, right)
        return ax, right, up

    def grid_points(self, shape: tuple[int, int]) -> np.ndarray:
        """(rows*cols, 3) physical centers of the image cells on the screen."""
        rows, cols = shape
        ax, right, up = self.frame()
        u = (np.arange(cols) + 0.5) / cols - 0.5
        v = 0.5 - (np.arange(rows) + 0.5) / rows
        uu, vv = np.meshgrid(u * self.width, v * self.height, indexing="xy")
        pts = (self.distance * ax[None, :]
               + uu.ravel()[:, None] * right[None, :]
               + vv.ravel()[:, None] * up[None, :])
        return pts


@dataclass
class TargetMeasure:
    """Weighted Dirac atoms: far-field directions or near-field points."""

    kind: str                      # "far_field" | "near_field"
    points: np.ndarray             # (N, 3); unit vectors when far_field
    masses: np.ndarray             # (N,) positive, summing to 1
    pixel_rows: np.ndarray | None = None
    pixel_cols: np.ndarray | None = None
    image_shape: tuple[int, int] | None = None
    screen: TargetScreen | None = None

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.masses = np.ascontiguousarray(self.masses, dtype=np.float64)
        if self.kind not in ("far_field", "near_field"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if len(self.points) != len(self.masses) or len(self.points) == 0:
            raise ValueError("points/masses size mismatch or empty target")
        if np.any(self.masses <= 0):
            raise ValueError("zero-mass atoms must be removed")
        self.masses = self.masses / self.masses.sum()
        if self.kind == "far_field":
            norms = np.linalg.norm(self.points, axis=1)
            self.points = self.points / norms[:, None]

    @property
    def count(self) -> int:
        return len(self.masses)

    @property
    def directions(self) -> np.ndarray:
        if self.kind != "far_field":
            raise ValueError("directions are only defined for far-field targets")
        return self.points

    def check_hemisphere(self, hemisphere: str) -> None:
        """Raise HemisphereViolation unless all far-field directions fit."""
        if self.kind != "far_field" or hemisphere == "any":
            return
        z = self.points[:, 2]
        if hemisphere == "lower" and np.any(z > -1e-12):
            raise HemisphereViolation("far-field directions must point downward")
        if hemisphere == "upper" and np.any(z < 1e-12):
            raise HemisphereViolation("far-field directions must point upward")


def load_target_image(image: "np.ndarray | str",
                      geometry: TargetScreen,
                      kind: str = "far_field",
                      gamma: float = 1.0) -> TargetMeasure:
    """One Dirac atom per nonzero pixel, laid out on the screen geometry.

    Pixel (r, c) maps to the center of its screen cell; far-field directions
    are the normalized cell centers, near-field atoms the cell centers
    themselves. Masses are proportional to (linear) pixel intensity ** gamma
    and normalized; zero pixels are dropped.
    """
    if isinstance(image, (str,)) or hasattr(image, "__fspath__"):
        image = read_grayscale(image)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("target image must be 2-D grayscale")
    if not np.any(image > 0):
        raise AllBlackImage("target image has no nonzero pixel")
    rows, cols = np.nonzero(image > 0)
    weights = image[rows, cols] ** gamma
    pts = geometry.grid_points(image.shape)
    flat = rows * image.shape[1] + cols
    pts = pts.reshape(image.shape[0] * image.shape[1], 3)[flat]
    return TargetMeasure(
        kind=kind,
        points=pts,
        masses=weights,
        pixel_rows=rows,
        pixel_cols=cols,
        image_shape=image.shape,
        screen=geometry,
    )


def grid_target(shape: tuple[int, int],
                geometry: TargetScreen,
                kind: str = "far_field") -> TargetMeasure:
    """Uniform grid target: every pixel of a constant image."""
    return load_target_image(np.ones(shape), geometry, kind=kind)


# ---------------------------------------------------------------------------
# Source construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """Declarative description of a source density.

    kind:
      "uniform_rect" | "gaussian_rect" | "image_rect"  (collimated, z=0 plane)
      "uniform_cap"  | "image_cap"                     (point source, unit sphere)
    """

    kind: str = "uniform_rect"
    center: tuple[float, float] = (0.0, 0.0)
    width: float = 1.0
    height: float = 1.0
    resolution: int = 16
    gaussian_sigma: float = 0.25      # relative to the longer side
    image: "np.ndarray | str | None" = None
    cap_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    cap_half_angle: float = np.pi / 6
    cap_level: int = 5


def build_source_density(spec: SourceSpec) -> SourceDensity:
    """Triangulate the requested support and sample the density per vertex."""
    if spec.kind.endswith("_rect"):
        mesh = rect_mesh(spec.center, spec.width, spec.height, spec.resolution)
        v = mesh.vertices
        if spec.kind == "uniform_rect":
            dens = np.ones(len(v))
        elif spec.kind == "gaussian_rect":
            sigma = spec.gaussian_sigma * max(spec.width, spec.height)
            r2 = (v[:, 0] - spec.center[0]) ** 2 + (v[:, 1] - spec.center[1]) ** 2
            dens = np.exp(-0.5 * r2 / sigma**2)
        elif spec.kind == "image_rect":
            dens = _sample_image_on_rect(spec, v)
        else:
            raise ValueError(f"unknown source kind {spec.kind!r}")
        if not np.any(dens > 0):
            raise EmptySupport("source density is identically zero")
        region = RectRegion(spec.center, spec.width, spec.height)
        return SourceDensity("plane", mesh, dens, region=region)

    if spec.kind.endswith("_cap"):
        mesh = cap_mesh(spec.cap_axis, spec.cap_half_angle, spec.cap_level)
        if spec.kind == "uniform_cap":
            dens = np.ones(len(mesh.vertices))
        elif spec.kind == "image_cap":
            dens = _sample_image_on_cap(spec, mesh.vertices)
        else:
            raise ValueError(f"unknown source kind {spec.kind!r}")
        if not np.any(dens > 0):
            raise EmptySupport("source density is identically zero")
        region = CapRegion(spec.cap_axis, spec.cap_half_angle, spec.cap_level)
        return SourceDensity("sphere", mesh, dens, region=region)

    raise ValueError(f"unknown source kind {spec.kind!r}")


def _sample_image_on_rect(spec: SourceSpec, verts: np.ndarray) -> np.ndarray:
    img = spec.image
    if isinstance(img, (str,)) or hasattr(img, "__fspath__"):
        img = read_grayscale(img)
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape
    u = (verts[:, 0] - spec.center[0]) / spec.width + 0.5
    v = 0.5 - (verts[:, 1] - spec.center[1]) / spec.height
    c = np.clip((u * cols).astype(int), 0, cols - 1)
    r = np.clip((v * rows).astype(int), 0, rows - 1)
    return img[r, c]


def _sample_image_on_cap(spec: SourceSpec, verts: np.ndarray) -> np.ndarray:
    # gnomonic projection of the cap onto the image square
    img = spec.image
    if isinstance(img, (str,)) or hasattr(img, "__fspath__"):
        img = read_grayscale(img)
    img = np.asarray(img, dtype=np.float64)
    axis = _unit(np.asarray(spec.cap_axis, dtype=np.float64))
    hint = np.array([0.0, 1.0, 0.0]) if abs(axis[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    right = _unit(np.cross(hint, axis))
    up = np.cross(axis, right)
    t = verts @ axis
    t = np.where(np.abs(t) < 1e-12, 1e-12, t)
    px = (verts @ right) / t
    py = (verts @ up) / t
    half = np.tan(spec.cap_half_angle)
    rows, cols = img.shape
    c = np.clip(((px / half + 1) / 2 * cols).astype(int), 0, cols - 1)
    r = np.clip(((1 - (py / half + 1) / 2) * rows).astype(int), 0, rows - 1)
    return img[r, c]


# ---------------------------------------------------------------------------
# Blending toward a uniform density on an enlarged support
# ---------------------------------------------------------------------------

def blend_with_uniform(src: SourceDensity,
                       t: float,
                       region: "RectRegion | CapRegion | None" = None,
                       resolution: int | None = None,
                       mesh: TriMesh | None = None) -> SourceDensity:
    """Normalized mixture (1-t)*rho + t*uniform(region) on the enlarged support.

    ``region`` must contain the support of ``src``; with t=0 and the original
    region this reproduces the input density. A prebuilt ``mesh`` may be
    passed so successive blend stages share the same triangulation.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("blend parameter must lie in [0, 1]")
    if region is None:
        region = src.region
        if region is None:
            raise ValueError("source has no region metadata; pass one explicitly")
    if mesh is None:
        mesh = region.build_mesh(resolution) if resolution else region.build_mesh()
    verts = mesh.vertices

    rho = src.density_at(verts)
    # uniform over the enlarged mesh, normalized by its own total area
    area = mesh.areas.sum()
    uniform = np.full(len(verts), 1.0 / area)
    dens = (1.0 - t) * rho + t * uniform
    return SourceDensity(src.domain_kind, mesh, dens, region=region)

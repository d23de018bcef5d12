"""Near-field (finite-distance) targets via iterated far-field solves.

Each outer iteration re-aims the far-field directions from the current
surface points toward the fixed target points, re-solves, and moves the aim
anchors to the new cell centroids, until the mean centroid displacement
drops below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import RectRegion, rect_mesh
from .errors import EmptyCell, InitialEmptyCell
from .measures import SourceDensity, TargetMeasure
from .optics import ProblemSpec, WeightVector, parameterize
from .power_diagram import evaluate_G
from .solver import SolveReport, SolverConfig, damped_newton, solve_far_field
from .surface import TriangleMesh, build_mesh


@dataclass
class NearFieldReport:
    """Outer-loop trace: displacement per iteration plus inner solve stats."""

    displacements: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_strategies: list = field(default_factory=list)
    converged: bool = False

    @property
    def outer_iterations(self) -> int:
        return len(self.displacements)

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "displacements": [float(d) for d in self.displacements],
            "inner_iterations": [int(i) for i in self.inner_iterations],
            "inner_strategies": list(self.inner_strategies),
            "converged": self.converged,
        }


def cell_centroid(polygons, source: SourceDensity) -> np.ndarray:
    """Density-weighted centroid of a cell given as (vertices, triangle, ...)
    tuples; spherical domains renormalize onto the unit sphere."""
    grad, off = source.affine
    mass = 0.0
    mom = np.zeros(3)
    for item in polygons:
        verts = np.asarray(item[0], dtype=np.float64)
        tri = int(item[1])
        n = source.mesh.normals[tri]
        r = verts @ grad[tri] + off[tri]
        v0 = verts[0]
        for k in range(1, len(verts) - 1):
            a = 0.5 * np.dot(np.cross(verts[k] - v0, verts[k + 1] - v0), n)
            tsum = v0 + verts[k] + verts[k + 1]
            mass += a * (r[0] + r[k] + r[k + 1]) / 3.0
            mom += a / 12.0 * (r[0] * (v0 + tsum) + r[k] * (verts[k] + tsum)
                               + r[k + 1] * (verts[k + 1] + tsum))
    if mass <= 0:
        raise EmptyCell("cannot take the centroid of an empty cell")
    c = mom / mass
    if source.domain_kind == "sphere":
        c = c / np.linalg.norm(c)
    return c


def retarget_weights(spec: ProblemSpec, old_targets, new_targets,
                     psi: WeightVector, anchors: np.ndarray) -> WeightVector:
    """Adjust weights for moved target directions so that each cell's facet
    or primitive still matches the previous surface at its anchor point.

    Aimed directions drift between near-field stages; reusing the previous
    weights verbatim can empty many cells, while this first-order update
    keeps the partition nearly intact.
    """
    from .optics import facet_slope, radial_denominators

    values = psi.natural(spec)
    y_old = old_targets.directions if isinstance(old_targets, TargetMeasure) else old_targets
    y_new = new_targets.directions if isinstance(new_targets, TargetMeasure) else new_targets
    if spec.source_kind == "collimated":
        dp = facet_slope(spec, y_new) - facet_slope(spec, y_old)
        shift = np.einsum("ij,ij->i", anchors[:, :2], dp)
        out = values - shift if spec.is_union else values + shift
        return WeightVector(out, "natural")
    xhat = anchors / np.linalg.norm(anchors, axis=1, keepdims=True)
    a_old = np.einsum("ii->i", radial_denominators(spec, xhat, y_old))
    a_new = np.einsum("ii->i", radial_denominators(spec, xhat, y_new))
    ratio = np.where((a_old > 0) & (a_new > 0), a_new / np.where(a_old > 0, a_old, 1.0), 1.0)
    return WeightVector(values * ratio, "natural")


def solve_nearfield(spec: ProblemSpec, source: SourceDensity,
                    targets: TargetMeasure, config: SolverConfig | None = None,
                    eta_nf: float = 1e-6, max_outer: int = 6,
                    ) -> tuple[WeightVector, np.ndarray, NearFieldReport]:
    """Fixed-point loop over far-field solves for a finite-distance target.

    Starts with all aim anchors at the origin (first directions are simply
    the normalized target points), warm-starts each stage from the previous
    weights, and stops when the mean L1 centroid displacement falls to
    ``eta_nf`` or after ``max_outer`` stages. Returns the final weights, the
    final far-field directions, and the outer-loop report.
    """
    if targets.kind != "near_field":
        raise ValueError("solve_nearfield expects a near-field target")
    config = config or SolverConfig()
    z = targets.points
    norm_z = np.linalg.norm(z, axis=1)
    if np.any(norm_z < 1e-9):
        raise ValueError("near-field points must be bounded away from the origin")

    rep = NearFieldReport()
    c = np.zeros_like(z)
    v = np.zeros_like(z)
    psi: WeightVector | None = None
    directions = None
    ff = None
    prev_ff = None

    for _ in range(max_outer):
        d = z - v
        directions = d / np.linalg.norm(d, axis=1, keepdims=True)
        prev_ff = ff
        ff = TargetMeasure(kind="far_field", points=directions, masses=targets.masses,
                           pixel_rows=targets.pixel_rows, pixel_cols=targets.pixel_cols,
                           image_shape=targets.image_shape, screen=targets.screen)
        if psi is None:
            psi, inner = solve_far_field(spec, source, ff, config)
        else:
            starts = [("warm", psi)]
            if prev_ff is not None:
                starts.insert(0, ("retargeted",
                                  retarget_weights(spec, prev_ff, ff, psi, c)))
            inner = None
            for name, start in starts:
                try:
                    psi, inner = damped_newton(spec, source, ff, start, config)
                    inner.init_strategy = name
                    break
                except InitialEmptyCell:
                    continue
            if inner is None:
                # stale weights emptied cells after the aim moved; restart
                psi, inner = solve_far_field(spec, source, ff, config)
        rep.inner_iterations.append(inner.iterations)
        rep.inner_strategies.append(inner.init_strategy)

        state = evaluate_G(spec, psi, source, ff, want_jac=False)
        c_new = state.diagram.centroids()
        disp = float(np.abs(c_new - c).sum() / targets.count)
        rep.displacements.append(disp)
        c = c_new
        v = parameterize(spec, ff, psi, c)
        if disp <= eta_nf:
            rep.converged = True
            break

    return psi, directions, rep


# ---------------------------------------------------------------------------
# Pillows
# ---------------------------------------------------------------------------

@dataclass
class PillowSolution:
    """One tile of a decomposed component, positioned at its sub-rectangle."""

    psi: WeightVector
    mesh: TriangleMesh
    directions: np.ndarray
    source: SourceDensity
    center: tuple[float, float]
    report: "NearFieldReport | SolveReport"


def solve_pillows(spec: ProblemSpec, source: SourceDensity,
                  grid: tuple[int, int], targets: TargetMeasure,
                  config: SolverConfig | None = None,
                  eta_nf: float = 1e-6, max_outer: int = 6,
                  subdivision: int = 0) -> list[PillowSolution]:
    """Split a collimated source rectangle into grid tiles, each solving the
    same target; far-field targets reproduce the tile-shift artifact, while
    near-field targets superimpose on the screen."""
    if spec.source_kind != "collimated":
        raise ValueError("pillows are defined for collimated sources")
    region = source.region
    if not isinstance(region, RectRegion):
        raise ValueError("pillow decomposition needs a rectangular source region")
    gx, gy = grid
    width = region.width / gx
    height = region.height / gy
    x0 = region.center[0] - region.width / 2
    y0 = region.center[1] - region.height / 2
    res = max(4, int(np.sqrt(source.mesh.faces.shape[0] / 2) / max(gx, gy)))

    out: list[PillowSolution] = []
    for ix in range(gx):
        for iy in range(gy):
            center = (x0 + (ix + 0.5) * width, y0 + (iy + 0.5) * height)
            mesh = rect_mesh(center, width, height, res)
            dens = source.density_at(mesh.vertices)
            sub = SourceDensity("plane", mesh, np.maximum(dens, 1e-12),
                                region=RectRegion(center, width, height))
            if targets.kind == "near_field":
                psi, directions, rep = solve_nearfield(
                    spec, sub, targets, config, eta_nf=eta_nf, max_outer=max_outer)
                ff = TargetMeasure("far_field", directions, targets.masses)
            else:
                psi, rep = solve_far_field(spec, sub, targets, config)
                directions = targets.directions
                ff = targets
            state = evaluate_G(spec, psi, sub, ff, want_jac=False, want_polys=True)
            comp = build_mesh(spec, ff, psi, state.diagram, subdivision=subdivision)
            out.append(PillowSolution(psi=psi, mesh=comp, directions=directions,
                                      source=sub, center=center, report=rep))
    return out

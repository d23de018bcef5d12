"""Damped Newton solver for the light-energy conservation equation G(psi) = sigma.

The iteration runs in transport variables, where the Jacobian is symmetric
negative semidefinite with kernel spanned by the constant vector. Each step
solves the reduced normal system with Jacobi-preconditioned conjugate
gradients and backtracks by halving until both the cell-mass floor and the
residual-decrease condition hold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg
from scipy.special import logsumexp

from .domains import CapRegion, RectRegion
from .errors import (
    BacktrackExhausted,
    InitialEmptyCell,
    IterationLimit,
    LinearSolveFailure,
)
from .measures import SourceDensity, TargetMeasure, blend_with_uniform
from .optics import (
    ProblemSpec,
    WeightVector,
    facet_slope,
    from_transport_vars,
    initial_weights,
    radial_denominators,
    renormalize_transport,
    to_transport_vars,
    weighted_point,
)
from .power_diagram import TransportState, evaluate_G


@dataclass
class SolverConfig:
    """Newton-loop tolerances and budgets."""

    eta: float = 1e-8                 # residual tolerance on ||G - sigma||_inf
    max_newton_iters: int = 100
    max_backtracks: int = 40
    cg_tolerance: float = 1e-10
    cg_max_iters: int | None = None   # default 10 * N
    blend_schedule: tuple = (0.5, 0.1, 0.0)


@dataclass
class SolveReport:
    """Per-iteration trace of a damped Newton solve."""

    n: int = 0
    eps0: float = 0.0
    residuals: list = field(default_factory=list)    # includes the initial residual
    backtracks: list = field(default_factory=list)   # accepted l per iteration
    min_masses: list = field(default_factory=list)   # min_i G_i per accepted iterate
    cg_iterations: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    init_strategy: str = "given"
    blend_stages: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.backtracks)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "eps0": self.eps0,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residuals],
            "backtracks": [int(b) for b in self.backtracks],
            "min_masses": [float(m) for m in self.min_masses],
            "cg_iterations": [int(c) for c in self.cg_iterations],
            "wall_time": self.wall_time,
            "converged": self.converged,
            "init_strategy": self.init_strategy,
            "blend_stages": self.blend_stages,
        }


# ---------------------------------------------------------------------------
# Newton direction
# ---------------------------------------------------------------------------

def newton_direction(state: TransportState, sigma: np.ndarray,
                     config: SolverConfig | None = None) -> tuple[np.ndarray, int]:
    """Solve DG d = -(G - sigma) for the mean-zero (pseudo-inverse) direction.

    One row/column (the atom with the largest mass) is removed to make the
    system definite; the reduced SPD system -DG d = G - sigma is solved with
    Jacobi-preconditioned conjugate gradients and the result is shifted to
    zero mean, matching the pseudo-inverse convention.
    """
    config = config or SolverConfig()
    resid = state.G - sigma
    n = len(sigma)
    d = np.zeros(n)
    if n == 1 or np.max(np.abs(resid)) == 0.0:
        return d, 0

    drop = int(np.argmax(sigma))
    keep = np.flatnonzero(np.arange(n) != drop)
    A = (-state.jacobian)[keep][:, keep].tocsr()
    rhs = resid[keep]

    diag = A.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    M = sp.diags(inv_diag)
    count = {"it": 0}

    def cb(_):
        count["it"] += 1

    maxiter = config.cg_max_iters or max(10 * n, 100)
    sol, info = cg(A, rhs, rtol=config.cg_tolerance, atol=0.0,
                   maxiter=maxiter, M=M, callback=cb)
    if info != 0:
        raise LinearSolveFailure(f"conjugate gradient stopped with status {info}")
    d[keep] = sol
    d -= d.mean()
    return d, count["it"]


# ---------------------------------------------------------------------------
# Damped Newton loop
# ---------------------------------------------------------------------------

def damped_newton(spec: ProblemSpec, source: SourceDensity, targets: TargetMeasure,
                  psi0: WeightVector, config: SolverConfig | None = None,
                  report: SolveReport | None = None) -> tuple[WeightVector, SolveReport]:
    """Drive ||G(psi) - sigma||_inf below config.eta from a feasible start.

    Every accepted iterate keeps min_i G_i >= eps0 where eps0 is fixed from
    the initial masses; the residual shrinks at least by the accepted-step
    factor (1 - 2^-(l+1)) per iteration.
    """
    config = config or SolverConfig()
    sigma = targets.masses
    t0 = time.perf_counter()

    state = evaluate_G(spec, psi0, source, targets, want_jac=True)
    if np.any(state.G <= 0.0):
        empty = int((state.G <= 0.0).sum())
        raise InitialEmptyCell(f"{empty} cells have zero mass at the initial weights")

    rep = report or SolveReport()
    rep.n = targets.count
    eps0 = min(float(state.G.min()), float(sigma.min()))
    rep.eps0 = eps0

    phi = renormalize_transport(spec, to_transport_vars(spec, psi0.natural(spec)))
    res = float(np.max(np.abs(state.G - sigma)))
    rep.residuals.append(res)

    while res > config.eta:
        if rep.iterations >= config.max_newton_iters:
            rep.wall_time += time.perf_counter() - t0
            raise IterationLimit(
                f"residual {res:.3e} after {rep.iterations} iterations (eta={config.eta:g})")
        d, cg_iters = newton_direction(state, sigma, config)
        accepted = None
        for level in range(config.max_backtracks + 1):
            cand_phi = phi + d * 2.0 ** (-level)
            cand_psi = WeightVector(from_transport_vars(spec, cand_phi), "natural")
            cand_state = evaluate_G(spec, cand_psi, source, targets,
                                    want_jac=(level == 0))
            cand_res = float(np.max(np.abs(cand_state.G - sigma)))
            if (cand_state.G.min() >= eps0
                    and cand_res <= (1.0 - 2.0 ** (-(level + 1))) * res):
                accepted = (level, cand_phi, cand_state, cand_res)
                break
        if accepted is None:
            rep.wall_time += time.perf_counter() - t0
            raise BacktrackExhausted(
                f"no acceptable step within {config.max_backtracks} halvings "
                f"(residual {res:.3e})")
        level, cand_phi, cand_state, res = accepted
        if cand_state.jacobian is None:
            cand_state = evaluate_G(
                spec, WeightVector(from_transport_vars(spec, cand_phi), "natural"),
                source, targets, want_jac=True)
        phi = renormalize_transport(spec, cand_phi)
        state = cand_state
        rep.residuals.append(res)
        rep.backtracks.append(level)
        rep.min_masses.append(float(state.G.min()))
        rep.cg_iterations.append(cg_iters)

    rep.converged = True
    rep.wall_time += time.perf_counter() - t0
    return WeightVector(from_transport_vars(spec, phi), "natural"), rep


# ---------------------------------------------------------------------------
# Entropic warm start (feasible initial weights for hard variants)
# ---------------------------------------------------------------------------

def _transport_cost(spec: ProblemSpec, x: np.ndarray, targets: TargetMeasure) -> np.ndarray:
    """Cost c(x, y_j) with cells = argmin_j [c(x, y_j) + phi_j]."""
    y = targets.directions
    if spec.source_kind == "collimated":
        slopes = facet_slope(spec, y)
        proj = x[:, :2] @ slopes.T
        return proj if spec.is_union else -proj
    a = radial_denominators(spec, x, y)
    a = np.maximum(a, 1e-300)
    return np.log(a) if spec.is_union else -np.log(a)


def entropic_initial_weights(spec: ProblemSpec, source: SourceDensity,
                             targets: TargetMeasure,
                             stages: int = 6, sweeps: int = 120) -> WeightVector:
    """Initial weights from entropically regularized transport.

    Runs log-domain Sinkhorn between the triangle centroids (with triangle
    masses) and the target atoms, annealing the regularization until the
    resulting weights give every cell positive mass. Covers the variants for
    which the closed-form initializations provably leave empty cells.
    """
    x = source.mesh.centroids
    if source.domain_kind == "sphere":
        x = x / np.linalg.norm(x, axis=1, keepdims=True)
    mu = source.triangle_masses
    keep = mu > 0
    x, mu = x[keep], mu[keep] / mu[keep].sum()
    sigma = targets.masses

    C = _transport_cost(spec, x, targets)
    spread = float(C.max() - C.min())
    if spread <= 0:
        spread = 1.0
    log_mu = np.log(mu)[:, None]
    log_sigma = np.log(sigma)[None, :]

    f = np.zeros(len(mu))
    g = np.zeros(len(sigma))
    eps = 0.25 * spread
    best = None
    for _ in range(stages):
        for _ in range(sweeps):
            g = -eps * logsumexp((f[:, None] - C) / eps + log_mu, axis=0)
            f = -eps * logsumexp((g[None, :] - C) / eps + log_sigma, axis=1)
        phi = renormalize_transport(spec, -g)
        psi = WeightVector(from_transport_vars(spec, phi), "natural")
        state = evaluate_G(spec, psi, source, targets, want_jac=False)
        if state.G.min() > 0:
            return psi
        best = psi
        eps *= 0.3
    if best is None:
        raise InitialEmptyCell("entropic initialization failed")
    return best


# ---------------------------------------------------------------------------
# Far-field driver: initialization cascade and density blending
# ---------------------------------------------------------------------------

def default_enlargement(spec: ProblemSpec, source: SourceDensity,
                        targets: TargetMeasure) -> "RectRegion | CapRegion":
    """Support enlargement containing the seed points of the initialization."""
    y = targets.directions
    if spec.source_kind == "collimated":
        p, _ = weighted_point(spec, y, np.ones(targets.count))
        pts = np.vstack([source.mesh.vertices[:, :2], p[:, :2]])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-6)
        lo -= 0.1 * span
        hi += 0.1 * span
        center = tuple((lo + hi) / 2)
        return RectRegion(center, float(hi[0] - lo[0]), float(hi[1] - lo[1]))

    region = source.region
    axis = np.asarray(region.axis if isinstance(region, CapRegion) else (0, 0, 1.0),
                      dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    base = region.half_angle if isinstance(region, CapRegion) else np.pi / 6
    level = region.level if isinstance(region, CapRegion) else 5
    ang_y = np.arccos(np.clip(y @ axis, -1, 1))
    if spec.component == "mirror":
        if spec.is_union:
            # reach within 80 degrees of every target so each cell is nonempty
            needed = float(ang_y.max()) - np.deg2rad(80.0)
        else:
            needed = float(np.arccos(np.clip(-y @ axis, -1, 1)).max()) + np.deg2rad(6.0)
        half = min(max(base, needed), np.deg2rad(88.0))
        return CapRegion(tuple(axis), half, level)

    # point-source lens: enlargement must respect the conic domain guard
    margin = np.deg2rad(2.0)
    limit = np.arccos(1.0 / spec.kappa)

    def forbidden(dirs: np.ndarray) -> np.ndarray:
        flat = dirs.reshape(-1, 3)
        bad = (spec.kappa * (flat @ y.T) - 1.0 <= np.sin(margin)).any(axis=1)
        return bad.reshape(dirs.shape[:-1])

    half = min(max(base, float(ang_y.max()) + limit - margin), np.deg2rad(88.0))
    return CapRegion(tuple(axis), half, level, forbidden=forbidden)


def solve_far_field(spec: ProblemSpec, source: SourceDensity, targets: TargetMeasure,
                    config: SolverConfig | None = None,
                    psi0: WeightVector | None = None) -> tuple[WeightVector, SolveReport]:
    """Initialization cascade + damped Newton: the far-field pipeline.

    Tries the closed-form initial weights, then the entropic warm start, then
    a density-blend continuation over an enlarged support, finishing with an
    exact solve on the original source.
    """
    config = config or SolverConfig()
    targets.check_hemisphere(spec.hemisphere)

    attempts: list[tuple[str, WeightVector]] = []
    if psi0 is not None:
        attempts.append(("given", psi0))
    else:
        candidates = [("default", initial_weights(spec, targets))]
        if spec.source_kind == "collimated":
            candidates.append(("scaled-voronoi",
                               initial_weights(spec, targets, source=source)))
        # keep the candidate whose worst initial cell is least degenerate
        scored = []
        for name, start in candidates:
            g = evaluate_G(spec, start, source, targets, want_jac=False).G
            scored.append((float(g.min()), name, start))
        scored.sort(key=lambda item: -item[0])
        attempts.extend((name, start) for _, name, start in scored)

    for name, start in attempts:
        try:
            psi, rep = damped_newton(spec, source, targets, start, config)
            rep.init_strategy = name
            return psi, rep
        except InitialEmptyCell:
            continue

    try:
        start = entropic_initial_weights(spec, source, targets)
        psi, rep = damped_newton(spec, source, targets, start, config)
        rep.init_strategy = "entropic"
        return psi, rep
    except InitialEmptyCell:
        pass

    return _solve_with_blending(spec, source, targets, config)


def _solve_with_blending(spec: ProblemSpec, source: SourceDensity,
                         targets: TargetMeasure,
                         config: SolverConfig) -> tuple[WeightVector, SolveReport]:
    region = default_enlargement(spec, source, targets)
    mesh = region.build_mesh()
    stage_config = SolverConfig(
        eta=max(config.eta, 1e-7),
        max_newton_iters=config.max_newton_iters,
        max_backtracks=config.max_backtracks,
        cg_tolerance=config.cg_tolerance,
        cg_max_iters=config.cg_max_iters,
    )

    schedule = [t for t in config.blend_schedule if t > 0] + [0.0]
    psi: WeightVector | None = None
    stages_run: list = []
    pending = list(schedule)
    last_t = 1.0
    refinements = 0
    while pending:
        t = pending[0]
        blended = blend_with_uniform(source, t, region, mesh=mesh)
        starts: list[tuple[str, WeightVector]] = []
        if psi is not None:
            starts.append(("warm", psi))
        starts.append(("default", initial_weights(spec, targets)))
        solved = False
        for name, start in starts:
            try:
                psi, rep = damped_newton(spec, blended, targets, start, stage_config)
                stages_run.append({"t": t, "iterations": rep.iterations, "init": name})
                solved = True
                break
            except InitialEmptyCell:
                continue
        if not solved:
            try:
                start = entropic_initial_weights(spec, blended, targets)
                psi, rep = damped_newton(spec, blended, targets, start, stage_config)
                stages_run.append({"t": t, "iterations": rep.iterations, "init": "entropic"})
                solved = True
            except InitialEmptyCell:
                pass
        if not solved:
            if refinements >= 8:
                raise InitialEmptyCell(
                    "blend continuation failed to keep all cells nonempty")
            pending.insert(0, (last_t + t) / 2)
            refinements += 1
            continue
        last_t = t
        pending.pop(0)

    # exact final solve on the original source, warm-started
    psi_final, rep = damped_newton(spec, source, targets, psi, config)
    rep.init_strategy = "blend"
    rep.blend_stages = stages_run
    return psi_final, rep

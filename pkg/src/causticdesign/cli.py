"""Command-line entry point: solve, nearfield, simulate.

Configuration comes from an optional JSON file plus flag overrides; every
run is reproducible from (config, seed). Exit codes: 0 success, 2 config
error, 3 solver failure, 4 simulation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import errors
from .images import write_grayscale
from .measures import (
    SourceSpec,
    TargetScreen,
    build_source_density,
    grid_target,
    load_target_image,
)
from .nearfield import solve_nearfield, solve_pillows
from .optics import VARIANT_NAMES, ProblemSpec
from .power_diagram import evaluate_G
from .presets import (
    default_nearfield_source_spec,
    default_screen,
    default_source_spec,
    validate_lens_guard,
)
from .simulate import compare, trace
from .solver import SolverConfig, solve_far_field
from .surface import build_mesh, export_obj, export_ply, load_obj

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SIMULATION = 4

CONFIG_ERRORS = (
    errors.HemisphereViolation,
    errors.AllBlackImage,
    errors.EmptySupport,
    errors.DenominatorSign,
    errors.DegenerateDirection,
    ValueError,
    OSError,
    json.JSONDecodeError,
)
SOLVER_ERRORS = (
    errors.InitialEmptyCell,
    errors.BacktrackExhausted,
    errors.IterationLimit,
    errors.LinearSolveFailure,
    errors.NonPositiveWeight,
    errors.EmptyCell,
    errors.EmptyCellMesh,
)
SIMULATION_ERRORS = (
    errors.NoIntersectionMesh,
    errors.DimensionMismatch,
    errors.TotalInternalReflection,
)


def _load_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
    for key in ("problem", "kappa", "seed", "eta", "target", "out", "report",
                "size", "resolution", "cap_level", "subdivision", "rays",
                "screen_distance", "screen_size", "screen_width", "screen_height",
                "eta_nf", "max_outer", "pillows", "mesh", "threads", "gamma",
                "use_corner_normals", "format", "source_size", "near_field"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("problem", "cs-mirror-convex")
    cfg.setdefault("kappa", 1.5)
    cfg.setdefault("seed", 0)
    cfg.setdefault("eta", 1e-8)
    cfg.setdefault("subdivision", 0)
    if cfg["problem"] not in VARIANT_NAMES:
        raise ValueError(f"unknown problem {cfg['problem']!r}; "
                         f"choose from {sorted(VARIANT_NAMES)}")
    return cfg


def _build_problem(cfg: dict, nearfield: bool = False):
    spec = ProblemSpec.from_name(cfg["problem"], kappa=float(cfg["kappa"]))
    maker = default_nearfield_source_spec if nearfield else default_source_spec
    size = cfg.get("source_size")
    src_spec = maker(spec, resolution=cfg.get("resolution"),
                     cap_level=cfg.get("cap_level"),
                     size=float(size) if size else None)
    source = build_source_density(src_spec)
    return spec, source


def _build_targets(cfg: dict, spec: ProblemSpec, kind: str):
    screen = default_screen(
        spec,
        distance=float(cfg.get("screen_distance", 2.0)),
        size=float(cfg.get("screen_size", 0.6)),
    )
    if cfg.get("screen_width"):
        screen = TargetScreen(screen.distance, float(cfg["screen_width"]),
                              float(cfg.get("screen_height", cfg["screen_width"])),
                              screen.axis)
    if cfg.get("target"):
        targets = load_target_image(cfg["target"], screen, kind=kind,
                                    gamma=float(cfg.get("gamma", 1.0)))
    else:
        n = int(cfg.get("size", 32))
        targets = grid_target((n, n), screen, kind=kind)
    return targets, screen


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(eta=float(cfg.get("eta", 1e-8)),
                        max_newton_iters=int(cfg.get("max_newton_iters", 100)),
                        max_backtracks=int(cfg.get("max_backtracks", 40)))


def _write_mesh(mesh, cfg: dict, path: str) -> None:
    if cfg.get("format", "obj") == "ply" or str(path).endswith(".ply"):
        export_ply(mesh, path)
    else:
        export_obj(mesh, path)


def _write_report(cfg: dict, payload: dict) -> None:
    path = cfg.get("report")
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        spec, source = _build_problem(cfg)
        targets, _ = _build_targets(cfg, spec, "far_field")
        targets.check_hemisphere(spec.hemisphere)
        validate_lens_guard(spec, source, targets)
        solver_cfg = _solver_config(cfg)
    except CONFIG_ERRORS as exc:
        print(f"config error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        t0 = time.perf_counter()
        psi, rep = solve_far_field(spec, source, targets, solver_cfg)
        t_solve = time.perf_counter() - t0
        state = evaluate_G(spec, psi, source, targets, want_jac=False, want_polys=True)
        mesh = build_mesh(spec, targets, psi, state.diagram,
                          subdivision=int(cfg.get("subdivision", 0)))
        out = cfg.get("out", "component.obj")
        _write_mesh(mesh, cfg, out)
    except SOLVER_ERRORS as exc:
        print(f"solver error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    payload = {
        "problem": spec.name,
        "N": targets.count,
        "iterations": rep.iterations,
        "residual_history": [float(r) for r in rep.residuals],
        "timings": {"solve_seconds": t_solve},
        "residual": float(rep.residuals[-1]),
        "mesh": str(out),
        "faces": int(len(mesh.faces)),
        "solver": rep.to_dict(),
    }
    _write_report(cfg, payload)
    print(f"{spec.name}: N={targets.count} iterations={rep.iterations} "
          f"residual={rep.residuals[-1]:.3e} -> {out}")
    return EXIT_OK


def cmd_nearfield(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        cfg.setdefault("screen_distance", 1.0)
        cfg.setdefault("screen_size", 0.3)
        spec, source = _build_problem(cfg, nearfield=True)
        targets, _ = _build_targets(cfg, spec, "near_field")
        solver_cfg = _solver_config(cfg)
        eta_nf = float(cfg.get("eta_nf", 1e-6))
        max_outer = int(cfg.get("max_outer", 6))
        pillows = cfg.get("pillows")
    except CONFIG_ERRORS as exc:
        print(f"config error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = cfg.get("out", "component.obj")
    try:
        t0 = time.perf_counter()
        if pillows:
            k = int(pillows)
            sols = solve_pillows(spec, source, (k, k), targets, solver_cfg,
                                 eta_nf=eta_nf, max_outer=max_outer,
                                 subdivision=int(cfg.get("subdivision", 0)))
            stem = Path(out)
            mesh_paths = []
            for i, sol in enumerate(sols):
                path = stem.with_name(f"{stem.stem}_pillow{i:02d}{stem.suffix}")
                _write_mesh(sol.mesh, cfg, path)
                mesh_paths.append(str(path))
            payload = {
                "problem": spec.name,
                "N": targets.count,
                "pillows": k * k,
                "meshes": mesh_paths,
                "iterations": max(getattr(s.report, "outer_iterations", 0) for s in sols),
                "residual_history": [],
                "timings": {"solve_seconds": time.perf_counter() - t0},
                "reports": [s.report.to_dict() for s in sols],
            }
            _write_report(cfg, payload)
            print(f"{spec.name}: {k * k} pillows -> {mesh_paths[0]} ...")
            return EXIT_OK

        psi, directions, rep = solve_nearfield(spec, source, targets, solver_cfg,
                                               eta_nf=eta_nf, max_outer=max_outer)
        from .measures import TargetMeasure

        ff = TargetMeasure("far_field", directions, targets.masses)
        state = evaluate_G(spec, psi, source, ff, want_jac=False, want_polys=True)
        mesh = build_mesh(spec, ff, psi, state.diagram,
                          subdivision=int(cfg.get("subdivision", 0)))
        _write_mesh(mesh, cfg, out)
    except SOLVER_ERRORS as exc:
        print(f"solver error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    payload = {
        "problem": spec.name,
        "N": targets.count,
        "iterations": rep.outer_iterations,
        "residual_history": [float(d) for d in rep.displacements],
        "displacements": [float(d) for d in rep.displacements],
        "timings": {"solve_seconds": time.perf_counter() - t0},
        "nearfield": rep.to_dict(),
        "mesh": str(out),
    }
    _write_report(cfg, payload)
    print(f"{spec.name} near-field: outer={rep.outer_iterations} "
          f"displacement={rep.displacements[-1]:.3e} -> {out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        if not cfg.get("mesh"):
            raise ValueError("simulate requires --mesh")
        kind = "near_field" if cfg.get("near_field") else "far_field"
        spec, source = _build_problem(cfg, nearfield=(kind == "near_field"))
        targets, screen = _build_targets(cfg, spec, kind)
        mesh = load_obj(cfg["mesh"])
        rays = int(cfg.get("rays", 1_000_000))
    except CONFIG_ERRORS as exc:
        print(f"config error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        t0 = time.perf_counter()
        result = trace(mesh, spec, source, targets, rays=rays,
                       seed=int(cfg.get("seed", 0)),
                       use_corner_normals=bool(cfg.get("use_corner_normals", False)),
                       screen=screen,
                       screen_shape=targets.image_shape)
        tv = compare(result, targets)
    except SIMULATION_ERRORS as exc:
        print(f"simulation error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_SIMULATION

    out = cfg.get("out")
    if out and targets.image_shape is not None:
        hist_img = np.zeros(targets.image_shape)
        hist_img[targets.pixel_rows, targets.pixel_cols] = result.histogram
        write_grayscale(out, hist_img)
    payload = {
        "problem": spec.name,
        "N": targets.count,
        "iterations": 0,
        "residual_history": [],
        "timings": {"trace_seconds": time.perf_counter() - t0},
        "tv_distance": tv,
        "escaped_fraction": result.escaped_fraction,
        "rays": rays,
        "summary": result.summary(),
    }
    _write_report(cfg, payload)
    print(f"{spec.name}: rays={rays} tv={tv:.4f} escaped={result.escaped_fraction:.2e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--problem", choices=sorted(VARIANT_NAMES),
                   help="which of the eight design problems to run")
    p.add_argument("--kappa", type=float, help="refraction index ratio (default 1.5)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--target", help="grayscale target image (PGM or PNG)")
    p.add_argument("--size", type=int, help="uniform-grid target size when no image is given")
    p.add_argument("--resolution", type=int, help="source mesh resolution (plane)")
    p.add_argument("--cap-level", dest="cap_level", type=int,
                   help="source icosphere subdivision level (sphere)")
    p.add_argument("--screen-distance", dest="screen_distance", type=float)
    p.add_argument("--screen-size", dest="screen_size", type=float)
    p.add_argument("--source-size", dest="source_size", type=float,
                   help="source side length (plane) or cap half-angle in radians")
    p.add_argument("--gamma", type=float, help="intensity exponent for image targets")
    p.add_argument("--subdivision", type=int, help="curved mesh refinement levels")
    p.add_argument("--out", help="output mesh / image path")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--format", choices=("obj", "ply"), help="mesh output format")
    p.add_argument("--threads", type=int, help="worker cap (runs are deterministic)")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="causticdesign",
        description="Design mirrors/lenses that send a light source onto a "
                    "prescribed illumination, and verify them by ray tracing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="far-field solve + mesh export")
    _add_common(p_solve)
    p_solve.add_argument("--eta", type=float, help="residual tolerance (default 1e-8)")
    p_solve.set_defaults(func=cmd_solve)

    p_near = sub.add_parser("nearfield", help="finite-distance target solve")
    _add_common(p_near)
    p_near.add_argument("--eta", type=float, help="inner residual tolerance")
    p_near.add_argument("--eta-nf", dest="eta_nf", type=float,
                        help="outer displacement tolerance (default 1e-6)")
    p_near.add_argument("--max-outer", dest="max_outer", type=int,
                        help="outer iteration cap (default 6)")
    p_near.add_argument("--pillows", type=int,
                        help="split the source into k x k independent tiles")
    p_near.set_defaults(func=cmd_nearfield)

    p_sim = sub.add_parser("simulate", help="forward ray tracing of a mesh")
    _add_common(p_sim)
    p_sim.add_argument("--mesh", help="OBJ mesh to trace", required=False)
    p_sim.add_argument("--rays", type=int, help="ray count (default 1e6)")
    p_sim.add_argument("--near-field", dest="near_field", action="store_true",
                       help="bin on the near-field screen instead of directions")
    p_sim.add_argument("--use-corner-normals", dest="use_corner_normals",
                       action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

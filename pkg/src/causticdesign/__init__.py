"""Design of mirrors and lenses that redirect a light source onto a
prescribed illumination, via restricted power diagrams and a damped Newton
method, with forward ray tracing for verification."""

from .measures import (
    SourceDensity,
    SourceSpec,
    TargetMeasure,
    TargetScreen,
    blend_with_uniform,
    build_source_density,
    grid_target,
    load_target_image,
)
from .optics import (
    ProblemSpec,
    WeightVector,
    cell_predicate,
    facet_slope,
    initial_weights,
    normal_from_snell,
    parameterize,
    reflect,
    refract,
    weighted_point,
)
from .nearfield import (
    NearFieldReport,
    PillowSolution,
    cell_centroid,
    solve_nearfield,
    solve_pillows,
)
from .power_diagram import TransportState, VisibilityDiagram, cell_mass, evaluate_G, restricted_power_diagram
from .simulate import SimulationResult, compare, trace
from .solver import (
    SolveReport,
    SolverConfig,
    damped_newton,
    entropic_initial_weights,
    newton_direction,
    solve_far_field,
)
from .surface import TriangleMesh, build_mesh, export_obj, export_ply, load_obj

__all__ = [
    "NearFieldReport",
    "PillowSolution",
    "SimulationResult",
    "SolveReport",
    "SolverConfig",
    "TriangleMesh",
    "build_mesh",
    "cell_centroid",
    "cell_mass",
    "compare",
    "damped_newton",
    "entropic_initial_weights",
    "export_obj",
    "export_ply",
    "load_obj",
    "newton_direction",
    "solve_far_field",
    "solve_nearfield",
    "solve_pillows",
    "trace",
    "ProblemSpec",
    "SourceDensity",
    "SourceSpec",
    "TargetMeasure",
    "TargetScreen",
    "TransportState",
    "VisibilityDiagram",
    "WeightVector",
    "blend_with_uniform",
    "build_source_density",
    "cell_predicate",
    "evaluate_G",
    "facet_slope",
    "grid_target",
    "initial_weights",
    "load_target_image",
    "normal_from_snell",
    "parameterize",
    "reflect",
    "refract",
    "restricted_power_diagram",
    "weighted_point",
]

__version__ = "0.1.0"

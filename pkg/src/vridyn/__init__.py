"""Trajectory dynamics on a symmetric potential with a movable valley-ridge inflection point."""

from .ensembles import (
    LineEnsembleSpec,
    SliceGridSpec,
    line_ensemble,
    slice_area,
    slice_grid,
)
from .estimators import FateClassifier
from .experiments import (
    FateMap,
    QuadraticFit,
    QuadraticLaw,
    RecrossStats,
    SweepTable,
    angle_histogram,
    fate_map,
    quadratic_fit,
    recross_fraction_slice,
    run_line_experiment,
    sweep_slice,
    sweep_surface,
    trace_ensemble,
)
from .integrator import (
    Fate,
    IntegratorConfig,
    State,
    TrajectoryResult,
    energy_drift,
    hamiltonian,
    integrate,
    integrate_batch,
    vector_field,
)
from .pes import (
    Coefficients,
    CriticalPoint,
    Pes,
    PesSpec,
    VRIPotential,
    bottleneck_width,
    critical_points,
    gradient,
    hessian,
    locate_vri,
    potential,
    saddle_eigenvalues,
    solve_coefficients,
    vri_residuals,
)

__all__ = [
    "Coefficients",
    "CriticalPoint",
    "Fate",
    "FateClassifier",
    "FateMap",
    "IntegratorConfig",
    "LineEnsembleSpec",
    "Pes",
    "PesSpec",
    "QuadraticFit",
    "QuadraticLaw",
    "RecrossStats",
    "SliceGridSpec",
    "State",
    "SweepTable",
    "TrajectoryResult",
    "VRIPotential",
    "angle_histogram",
    "bottleneck_width",
    "critical_points",
    "energy_drift",
    "fate_map",
    "gradient",
    "hamiltonian",
    "hessian",
    "integrate",
    "integrate_batch",
    "line_ensemble",
    "locate_vri",
    "potential",
    "quadratic_fit",
    "recross_fraction_slice",
    "run_line_experiment",
    "saddle_eigenvalues",
    "slice_area",
    "slice_grid",
    "solve_coefficients",
    "sweep_slice",
    "sweep_surface",
    "trace_ensemble",
    "vector_field",
    "vri_residuals",
]

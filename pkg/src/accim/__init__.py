"""Conditionally invariant measures and escape rates for open interval maps.

The pipeline: model a piecewise expanding map of [0,1] with a hole
(`interval_maps`), build a Markov tower over reference intervals
(`tower_builder`), verify the quantitative hypotheses
(`condition_checker`), iterate the transfer operator to its fixed density
(`transfer_operator`), project back to the interval and study the
eigenvalue and density (`accim_analysis`), and cross-validate with
particle ensembles (`montecarlo`).
"""

from .accim_analysis import (
    AccimResult,
    IntervalDensity,
    SolveSettings,
    conditional_invariance_residual,
    density_bounds,
    l1_distance,
    lipschitz_study,
    project_density,
    shrink_study,
    solve,
    solve_system,
    srb_closed,
    surviving_mass_after_step,
)
from .condition_checker import (
    ConstantsReport,
    TransitivityResult,
    check_hypotheses,
    check_transitivity,
    compute_constants,
    covering_time,
)
from .errors import (
    AccimError,
    ConfigError,
    DegenerateSystemError,
    DomainError,
    FamilyValidationError,
    HypothesisFailureError,
    ResolutionError,
    ResourceBudgetError,
    TotalEscapeError,
)
from .interval_maps import (
    Branch,
    Hole,
    OpenSystem,
    PiecewiseExpandingMap,
    build_open_system,
    distortion_constant,
    sample_distortion_ratios,
    survivor_intervals,
    survivor_measure,
    survivor_measure_exact,
)
from .montecarlo import (
    SurvivalRecord,
    empirical_conditional_density,
    ratio_estimate,
    simulate_survival,
)
from .tower_builder import (
    Tower,
    build_bases,
    build_tower,
    choose_delta,
    growth_partition,
    project_base,
    project_cell,
    semi_conjugacy_residual,
)
from .transfer_operator import (
    FixedPointResult,
    TowerDensity,
    apply_P,
    fixed_point,
    lasota_yorke_check,
    normalize,
    norms,
    random_density,
    ulam_oracle,
    uniform_density,
)

__all__ = [
    "AccimError",
    "AccimResult",
    "Branch",
    "ConfigError",
    "ConstantsReport",
    "DegenerateSystemError",
    "DomainError",
    "FamilyValidationError",
    "FixedPointResult",
    "Hole",
    "HypothesisFailureError",
    "IntervalDensity",
    "OpenSystem",
    "PiecewiseExpandingMap",
    "ResolutionError",
    "ResourceBudgetError",
    "SolveSettings",
    "SurvivalRecord",
    "TotalEscapeError",
    "Tower",
    "TowerDensity",
    "TransitivityResult",
    "apply_P",
    "build_bases",
    "build_open_system",
    "build_tower",
    "check_hypotheses",
    "check_transitivity",
    "choose_delta",
    "compute_constants",
    "conditional_invariance_residual",
    "covering_time",
    "density_bounds",
    "distortion_constant",
    "empirical_conditional_density",
    "fixed_point",
    "growth_partition",
    "l1_distance",
    "lasota_yorke_check",
    "lipschitz_study",
    "normalize",
    "norms",
    "project_base",
    "project_cell",
    "project_density",
    "random_density",
    "ratio_estimate",
    "sample_distortion_ratios",
    "semi_conjugacy_residual",
    "shrink_study",
    "simulate_survival",
    "solve",
    "solve_system",
    "srb_closed",
    "survivor_intervals",
    "survivor_measure",
    "survivor_measure_exact",
    "surviving_mass_after_step",
    "ulam_oracle",
    "uniform_density",
]

__version__ = "0.1.0"

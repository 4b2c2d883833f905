"""Monte Carlo toolkit for mean-field SDEs driven by rotationally invariant
alpha-stable noise (1 < alpha < 2), built on the subordinated-Brownian
representation Z_t = W_{S_t}."""

__version__ = "0.1.0"

from .coefficients import (
    BUILTIN_COEFFICIENTS,
    CoefficientSet,
    make_benchmark_coefficients,
    probe_assumptions,
)
from .grids import TimeGrid
from .measures import BinningSpec, EmpiricalMeasure, MeasureFlow
from .metrics import (
    MetricParams,
    damped_sup_distance,
    stratified_subsample,
    total_variation,
    wasserstein,
    weighted_variation,
)
from .solver import (
    DrivingNoise,
    Ensemble,
    SolverConfig,
    contraction_estimate,
    inner_fixed_point,
    moment_bound_report,
    outer_fixed_point,
    propagate,
    solve,
)
from .stable_paths import (
    StableParams,
    StablePath,
    SubordinatorPath,
    empirical_charfn,
    empirical_laplace,
    sample_one_sided_stable,
    sample_stable_path,
    sample_subordinator_path,
    stieltjes_exp_integral,
    subordinator_negative_moment,
)

__all__ = [name for name in dir() if not name.startswith("_")]

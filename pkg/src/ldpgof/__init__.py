"""Goodness-of-fit testing from non-interactive locally private views.

The package covers the full pipeline: dyadic piecewise-constant densities
and their projections, the Laplace privatization channel (single and
multi-resolution), the pairwise projection statistic with simulated
thresholds, the smoothness-adaptive aggregated test, closed-form separation
rate kernels with boundary alternatives, and a seeded Monte Carlo harness
with a CLI for level, power, and rate experiments.
"""

from .adaptive import (
    AdaptiveConfig,
    AdaptiveReport,
    calibrate_u_gamma,
    run_adaptive_test,
    statistics_all_levels,
    u_gamma_search,
)
from .channel import (
    ChannelSpec,
    PrivatizedSample,
    family_js,
    laplace_scale_for,
    privacy_ratio_audit,
    privatize,
)
from .dyadic import (
    CoefficientVector,
    PiecewiseConstantDensity,
    ProbabilityVector,
    ResolutionError,
    besov_membership,
    besov_seminorm_level,
    embed_multinomial,
    extract_multinomial,
    l2_sq_distance,
    phi_eval,
    project,
    projection_sq_distance,
    psi_eval,
)
from .gof import (
    ConfigError,
    TestConfig,
    TestReport,
    calibrate_null_quantile,
    run_test,
    select_resolution,
    statistic,
    statistic_discrete,
)
from .harness import ExperimentConfig, ExperimentResult, emit, run_experiment
from .rates import (
    AlternativeSpec,
    RateQuery,
    cell_bump_alternative,
    continuous_rate_bounds,
    discrete_rate_bounds,
    generate_alternative,
    indistinguishable_epsilon,
    probability_bump,
    z_alpha,
)

__version__ = "0.1.0"

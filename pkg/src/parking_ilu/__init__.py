"""Learning the optimal threshold in the continuous-time parking problem."""

__version__ = "0.1.0"

from ._numerics import DEFAULT_TOLERANCES, NumericalError, Tolerances
from .bounds import bound_report, lower_bound_constant, mse_bound_bhat, upper_bound_constant
from .harness import (
    ExperimentConfig,
    brute_force_threshold,
    estimator_mse_sweep,
    fit_log_growth,
    run_experiment,
    waiting_time_check,
)
from .ilu import IluState, IndifferenceLevelEstimator, full_info_threshold, ilu_step
from .intensity import (
    ConstantIntensity,
    CustomIntensity,
    EnvironmentParams,
    SinusoidalIntensity,
    TanhRampIntensity,
    parse_intensity,
    validate_class,
)
from .oracle import expected_cost, optimal_threshold, optimality_gap, tail_mean
from .simulate import RngStream, sample_path, sample_tau0

__all__ = [
    "DEFAULT_TOLERANCES",
    "NumericalError",
    "Tolerances",
    "bound_report",
    "lower_bound_constant",
    "mse_bound_bhat",
    "upper_bound_constant",
    "ExperimentConfig",
    "brute_force_threshold",
    "estimator_mse_sweep",
    "fit_log_growth",
    "run_experiment",
    "waiting_time_check",
    "IluState",
    "IndifferenceLevelEstimator",
    "full_info_threshold",
    "ilu_step",
    "ConstantIntensity",
    "CustomIntensity",
    "EnvironmentParams",
    "SinusoidalIntensity",
    "TanhRampIntensity",
    "parse_intensity",
    "validate_class",
    "expected_cost",
    "optimal_threshold",
    "optimality_gap",
    "tail_mean",
    "RngStream",
    "sample_path",
    "sample_tau0",
]

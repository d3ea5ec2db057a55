"""Mahalanobis balancing weights for causal effect estimation.

Typical use::

    from mbalance import load_csv, PipelineConfig, estimate
    sample = load_csv("data.csv", treatment_col="T", outcome_col="Y")
    result = estimate(sample, PipelineConfig(), bootstrap=500, seed=1)
"""

from .balancer import BalanceSolution, dual_objective, dual_problem, solve_group, solve_group_normalized
from .dataset import Sample, group_view, load_csv, write_csv
from .diagnostics import (
    DiagnosticsReport,
    asmd,
    gmim,
    mahalanobis_distance,
    mim,
    report,
    summarize,
    uniform_weights,
    weighted_asmd,
)
from .errors import MBalanceError, NumericalError, ValidationError
from .estimator import EffectEstimate, Fit, PipelineConfig, ate, bootstrap_se, estimate, fit
from .features import FeatureMatrix, FeatureSpec, evaluate, median_heuristic_bandwidth
from .metric import MetricFactor, build_metric, pooled_covariance
from .simlab import McSummary, ScenarioSpec, generate, run_monte_carlo, scenario
from .solver import SolveResult, minimize
from .tuning import DeltaGrid, TuningTrace, detect_kink, fixed_delta_policy, hdmb, select_delta

__version__ = "0.1.0"

__all__ = [
    "BalanceSolution", "DeltaGrid", "DiagnosticsReport", "EffectEstimate", "FeatureMatrix",
    "FeatureSpec", "Fit", "MBalanceError", "McSummary", "MetricFactor", "NumericalError",
    "PipelineConfig", "Sample", "ScenarioSpec", "SolveResult", "TuningTrace", "ValidationError",
    "asmd", "ate", "bootstrap_se", "build_metric", "detect_kink", "dual_objective", "dual_problem",
    "estimate", "evaluate", "fit", "fixed_delta_policy", "generate", "gmim", "group_view", "hdmb",
    "load_csv", "mahalanobis_distance", "median_heuristic_bandwidth", "mim", "minimize",
    "pooled_covariance", "report", "run_monte_carlo", "scenario", "select_delta", "solve_group",
    "solve_group_normalized", "summarize", "uniform_weights", "weighted_asmd", "write_csv",
]

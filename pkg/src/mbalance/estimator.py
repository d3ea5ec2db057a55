"""Weighted effect estimation and bootstrap standard errors.

:func:`fit` runs the whole weighting pipeline (features, metric, threshold
policy, both group solves); :func:`estimate` adds the point estimate and
diagnostics, and :func:`bootstrap_se` repeats the pipeline on resamples.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from . import balancer, tuning
from .dataset import Sample
from .diagnostics import DiagnosticsReport, report
from .errors import EmptyGroup, MBalanceError, MissingOutcome, TooManyFailedReplicates, ValidationError
from .features import FeatureMatrix, FeatureSpec, evaluate
from .metric import build_metric, metric_kind, pooled_covariance

METHODS = ("mb", "hdmb", "uniform")
ESTIMANDS = ("ATE", "ATC")
DEFAULT_BOOTSTRAP = 500


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to turn a sample into weights.

    ``delta`` is ``"grid"`` (select per group over ``grid``) or a fixed
    positive number used for both groups.
    """

    features: FeatureSpec = FeatureSpec("identity")
    metric: str = "W1"
    delta: Union[str, float] = "grid"
    grid: tuning.DeltaGrid = tuning.DeltaGrid()
    estimand: str = "ATE"
    method: str = "mb"
    variant: str = balancer.STANDARD
    kappa: float = tuning.KINK_RATIO
    kink_floor: float = tuning.KINK_FLOOR

    def __post_init__(self):
        metric_kind(self.metric)
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.estimand not in ESTIMANDS:
            raise ValidationError(f"unknown estimand {self.estimand!r}")
        if self.delta != "grid":
            d = float(self.delta)
            if not (d > 0 and math.isfinite(d)):
                raise ValidationError("fixed delta must be positive")
            object.__setattr__(self, "delta", d)
        if self.method == "hdmb" and self.features.kind != "identity":
            raise ValidationError("hdmb works on the identity feature map")
        if self.variant not in (balancer.STANDARD, balancer.NORMALIZED):
            raise ValidationError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True, eq=False)
class Fit:
    sample: Sample
    config: PipelineConfig
    features: FeatureMatrix
    metric: object
    solutions: Dict[int, balancer.BalanceSolution]
    target: Optional[np.ndarray] = None
    traces: Optional[dict] = None
    hdmb: Optional[tuning.HdmbTrace] = None

    @property
    def weights(self) -> np.ndarray:
        w = np.zeros(self.sample.n)
        for sol in self.solutions.values():
            w[sol.indices] = sol.weights
        return w

    @property
    def deltas(self) -> Dict[int, Optional[float]]:
        return {t: s.delta for t, s in self.solutions.items()}


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    estimand: str
    point: float
    se: Optional[float]
    bootstrap_reps: int
    deltas: dict
    diagnostics: DiagnosticsReport
    fit: Optional[Fit] = None


def atc_target_mean(features, sample) -> np.ndarray:
    """Control-group feature mean, the balancing target for ATC weights."""
    c = sample.treatment == 0
    if not c.any():
        raise EmptyGroup("no control subjects")
    return features.values[c].mean(axis=0)


def _uniform_solution(sample, t, k):
    idx = np.flatnonzero(sample.treatment == t)
    w = np.full(idx.size, 1.0 / idx.size)
    return balancer.BalanceSolution(np.zeros(k), w, w, float("nan"), t, idx, "Converged", True)


def fit(sample: Sample, config: PipelineConfig = PipelineConfig()) -> Fit:
    sample.require_groups()
    if config.method == "hdmb":
        return _fit_hdmb(sample, config)
    features = evaluate(config.features, sample)
    metric = build_metric(config.metric, pooled_covariance(features, sample))
    target = atc_target_mean(features, sample) if config.estimand == "ATC" else None
    if config.method == "uniform":
        sols = {t: _uniform_solution(sample, t, features.k) for t in (1, 0)}
        return Fit(sample, config, features, metric, sols, target)
    solve = balancer.solve_group if config.variant == balancer.STANDARD else balancer.solve_group_normalized
    sols, traces = {}, {}
    for t in (1, 0):
        if config.delta == "grid":
            tr = tuning.select_delta(features, sample, t, metric, config.grid, target, solve=solve)
            traces[t] = tr
            sols[t] = tr.chosen_solution
        else:
            sols[t] = solve(features, sample, t, metric, config.delta, target=target)
    return Fit(sample, config, features, metric, sols, target, traces or None)


def _fit_hdmb(sample, config):
    grid = config.grid if config.delta == "grid" else tuning.DeltaGrid((config.delta,))
    target_fn = (lambda f: atc_target_mean(f, sample)) if config.estimand == "ATC" else None
    trace = tuning.hdmb(sample, config.metric, grid, config.kappa, config.kink_floor, target_fn)
    target = target_fn(trace.features) if target_fn else None
    return Fit(sample, config, trace.features, trace.metric, trace.solutions(), target,
               {1: trace.treated, 0: trace.control}, trace)


def ate(sample: Sample, solutions) -> float:
    """``sum T w Y - sum (1 - T) w Y`` for within-group normalized weights.

    ``solutions`` is a ``{1: BalanceSolution, 0: BalanceSolution}`` mapping
    or a length-n weight vector.
    """
    if sample.outcome is None:
        raise MissingOutcome("sample has no outcome")
    if isinstance(solutions, dict):
        w = np.zeros(sample.n)
        for sol in solutions.values():
            w[sol.indices] = sol.weights
    else:
        w = np.asarray(solutions, dtype=float)
    T, Y = sample.treatment, sample.outcome
    return float((w * T) @ Y - (w * (1 - T)) @ Y)


def _diagnostics(f: Fit) -> DiagnosticsReport:
    return report(f.features, f.sample, f.weights, target=f.target)


def estimate(sample: Sample, config: PipelineConfig = PipelineConfig(), bootstrap: int = 0,
             seed: int = 0, retune: bool = True, threads: int = 1) -> EffectEstimate:
    f = fit(sample, config)
    point = ate(sample, f.solutions)
    se = None
    if bootstrap:
        _, se = bootstrap_se(sample, config, bootstrap, seed, retune=retune, threads=threads, _fit=f)
    return EffectEstimate(config.estimand, point, se, bootstrap if se is not None else 0,
                          f.deltas, _diagnostics(f), f)


def _replicate(args):
    sample, config, seed, b, budget, frozen = args
    for attempt in range(budget + 1):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b, attempt])))
        rows = rng.integers(0, sample.n, size=sample.n)
        boot = sample.take(rows)
        try:
            if frozen is None:
                return ate(boot, fit(boot, config).solutions), attempt
            return ate(boot, _fit_frozen(boot, config, frozen).solutions), attempt
        except MBalanceError:
            continue
    return None, budget + 1


def _fit_frozen(sample, config, deltas):
    sample.require_groups()
    features = evaluate(config.features, sample)
    metric = build_metric(config.metric, pooled_covariance(features, sample))
    target = atc_target_mean(features, sample) if config.estimand == "ATC" else None
    solve = balancer.solve_group if config.variant == balancer.STANDARD else balancer.solve_group_normalized
    sols = {t: solve(features, sample, t, metric, deltas[t], target=target) for t in (1, 0)}
    return Fit(sample, config, features, metric, sols, target)


def bootstrap_se(sample: Sample, config: PipelineConfig = PipelineConfig(), B: int = DEFAULT_BOOTSTRAP,
                 seed: int = 0, retune: bool = True, threads: int = 1, _fit: Optional[Fit] = None):
    """Pairs bootstrap: resample rows, rerun the pipeline, take the SD of estimates.

    Replicate ``b`` draws from the Philox stream keyed by ``(seed, b,
    attempt)``; a replicate whose pipeline fails (empty group, solver error)
    is redrawn with the next attempt. With ``retune=False`` each group's
    threshold is frozen at the value chosen on the original sample.

    Returns:
        ``(point, se)`` where ``point`` is the estimate on ``sample``.

    Raises:
        TooManyFailedReplicates: redraws exceeded ``ceil(0.2 * B)``.
    """
    if B < 2:
        raise ValidationError("bootstrap needs B >= 2")
    f = _fit or fit(sample, config)
    point = ate(sample, f.solutions)
    frozen = None
    if not retune and config.method == "mb":
        frozen = {t: s.delta for t, s in f.solutions.items()}
    budget = math.ceil(0.2 * B)
    args = [(sample, config, seed, b, budget, frozen) for b in range(B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate, args, chunksize=max(1, B // (4 * threads))))
    else:
        results = [_replicate(a) for a in args]
    redraws = sum(r[1] for r in results)
    if redraws > budget or any(r[0] is None for r in results):
        raise TooManyFailedReplicates(f"{redraws} redraws exceeded the budget of {budget}")
    est = np.array([r[0] for r in results])
    return point, float(est.std(ddof=1))

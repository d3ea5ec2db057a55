"""Threshold selection over a grid and high-dimensional covariate truncation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import balancer
from .diagnostics import asmd, gmim
from .errors import AllSolvesFailed, NumericalError, ValidationError
from .features import FeatureMatrix, FeatureSpec
from .metric import build_metric, pooled_covariance

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(10.0**-k for k in range(7))
FIXED_DELTA = 1e-4
KINK_RATIO = 2.0
KINK_FLOOR = 1e-8


def fixed_delta_policy() -> float:
    return FIXED_DELTA


@dataclass(frozen=True)
class DeltaGrid:
    values: tuple = DEFAULT_GRID

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v:
            raise ValidationError("delta grid is empty")
        if any(not (x > 0 and np.isfinite(x)) for x in v):
            raise ValidationError("delta grid values must be positive and finite")
        if any(a <= b for a, b in zip(v, v[1:])):
            raise ValidationError("delta grid must be strictly decreasing")
        object.__setattr__(self, "values", v)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TuningRecord:
    delta: float
    gmim: float
    solver_status: str
    at_origin: bool
    failed: bool = False
    error: Optional[str] = None


@dataclass(frozen=True, eq=False)
class TuningTrace:
    records: tuple
    chosen_delta: float
    chosen_solution: balancer.BalanceSolution
    group: int

    @property
    def chosen_gmim(self) -> float:
        return next(r.gmim for r in self.records if r.delta == self.chosen_delta and not r.failed)


def _as_grid(grid):
    if grid is None:
        return DeltaGrid()
    return grid if isinstance(grid, DeltaGrid) else DeltaGrid(tuple(grid))


def select_delta(features, sample, group, metric, grid=None, target=None, solve=None) -> TuningTrace:
    """Solve at every grid value and keep the one with the smallest GMIM.

    Solves that raise a numerical error are recorded and excluded. Ties go to
    the largest threshold. ``solve`` defaults to :func:`balancer.solve_group`.

    Raises:
        AllSolvesFailed: no grid value produced weights.
    """
    grid = _as_grid(grid)
    solve = solve or balancer.solve_group
    records: List[TuningRecord] = []
    best = None
    for delta in grid:
        try:
            sol = solve(features, sample, group, metric, delta, target=target)
        except NumericalError as exc:
            logger.debug("group %d delta %g failed: %s", group, delta, exc)
            records.append(TuningRecord(delta, float("nan"), "Failed", False, True, str(exc)))
            continue
        value = gmim(features, sample, group, sol.weights, metric, target)
        records.append(TuningRecord(delta, value, sol.solver_status, sol.at_origin))
        if best is None or value < best[0]:
            best = (value, delta, sol)
    if best is None:
        raise AllSolvesFailed(f"every grid value failed for group {group}")
    return TuningTrace(tuple(records), best[1], best[2], int(group))


def detect_kink(adjusted: Sequence[float], kappa: float = KINK_RATIO, floor: float = KINK_FLOOR):
    """Apply the ratio kink rule to a sequence of adjusted GMIM values.

    A kink is at step ``j >= 2`` (1-based) when value_j > kappa * value_{j-1}
    and value_j > floor. Returns ``(k0, kink_step)`` with ``kink_step`` None
    when there is no kink, in which case ``k0`` is the sequence length.
    """
    for j in range(2, len(adjusted) + 1):
        cur, prev = adjusted[j - 1], adjusted[j - 2]
        if cur > floor and cur > kappa * prev:
            return j - 1, j
    return len(adjusted), None


@dataclass(frozen=True)
class HdmbStep:
    j: int
    gmim1: float
    gmim1_adjusted: float
    chosen_delta: float


@dataclass(frozen=True, eq=False)
class HdmbTrace:
    order: tuple
    steps: tuple
    k0: int
    kink_found: bool
    kink_step: Optional[int]
    features: FeatureMatrix
    metric: object
    treated: TuningTrace
    control: TuningTrace

    @property
    def selected(self) -> tuple:
        return self.order[: self.k0]

    def solutions(self):
        return {1: self.treated.chosen_solution, 0: self.control.chosen_solution}


def rank_by_asmd(sample) -> tuple:
    """Covariate indices by descending unweighted ASMD, ties by column index."""
    a = asmd(FeatureMatrix.from_values(sample.covariates), sample)
    return tuple(int(i) for i in np.lexsort((np.arange(a.size), -a)))


def hdmb(sample, metric_kind="W1", grid=None, kappa=KINK_RATIO, floor=KINK_FLOOR, target_fn=None) -> HdmbTrace:
    """Truncate the identity basis at the first kink of GMIM_1 / j.

    Covariates enter one at a time in ASMD order; at each step the treated
    threshold is re-tuned. ``target_fn(features)`` may supply a balancing
    target other than the pooled mean (used for ATC).
    """
    grid = _as_grid(grid)
    order = rank_by_asmd(sample)
    spec = FeatureSpec("identity")
    steps, adjusted, traces = [], [], []
    k0, kink = sample.p, None
    for j in range(1, sample.p + 1):
        feats = FeatureMatrix.from_values(sample.covariates[:, order[:j]], spec)
        metric = build_metric(metric_kind, pooled_covariance(feats, sample))
        target = target_fn(feats) if target_fn else None
        trace = select_delta(feats, sample, 1, metric, grid, target)
        g = trace.chosen_gmim
        steps.append(HdmbStep(j, g, g / j, trace.chosen_delta))
        adjusted.append(g / j)
        traces.append((feats, metric, target, trace))
        k0, kink = detect_kink(adjusted, kappa, floor)
        if kink is not None:
            break
    feats, metric, target, treated = traces[k0 - 1]
    control = select_delta(feats, sample, 0, metric, grid, target)
    return HdmbTrace(order, tuple(steps), k0, kink is not None, kink, feats, metric, treated, control)

"""Univariate and multivariate imbalance measures.

All weighted measures take a length-n weight vector whose entries sum to
one within each treatment group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyVector, WeightSumViolation, ZeroDispersion
from .metric import build_metric, pooled_covariance

_SUM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    asmd: np.ndarray
    asmd_max: float
    asmd_mean: float
    asmd_median: float
    md: float
    mim: float
    gmim_treated: float
    gmim_control: float
    weights_used: str

    @property
    def gmim(self) -> float:
        return self.gmim_treated + self.gmim_control

    def as_dict(self) -> dict:
        return {
            "weights_used": self.weights_used,
            "asmd": [float(v) for v in self.asmd],
            "asmd_max": self.asmd_max,
            "asmd_mean": self.asmd_mean,
            "asmd_median": self.asmd_median,
            "md": self.md,
            "mim": self.mim,
            "gmim": self.gmim,
            "gmim_treated": self.gmim_treated,
            "gmim_control": self.gmim_control,
        }


def uniform_weights(sample) -> np.ndarray:
    T = sample.treatment
    w = np.empty(sample.n)
    for t in (0, 1):
        m = T == t
        w[m] = 1.0 / max(int(m.sum()), 1)
    return w


def _check_weights(sample, weights):
    w = np.asarray(weights, dtype=float)
    if w.shape != (sample.n,):
        raise DimensionMismatch(f"weights must have length {sample.n}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightSumViolation("weights must be finite and nonnegative")
    for t in (0, 1):
        s = w[sample.treatment == t].sum()
        if abs(s - 1.0) > _SUM_TOL:
            raise WeightSumViolation(f"group {t} weights sum to {s!r}, expected 1")
    return w


def _group_stats(F, T):
    F1, F0 = F[T == 1], F[T == 0]
    return F1.var(axis=0, ddof=1), F0.var(axis=0, ddof=1)


def _standardized(diff, s1, s0):
    denom = np.sqrt(0.5 * (s1 + s0))
    out = np.zeros_like(diff)
    ok = denom > 0
    out[ok] = np.abs(diff[ok]) / denom[ok]
    bad = ~ok & (diff != 0)
    if bad.any():
        raise ZeroDispersion(int(np.flatnonzero(bad)[0]))
    return out


def weighted_means(features, sample, weights):
    F, T = features.values, sample.treatment
    w = np.asarray(weights, dtype=float)
    return (w * T) @ F, (w * (1 - T)) @ F


def asmd(features, sample) -> np.ndarray:
    """Per-feature absolute standardized mean difference (unweighted)."""
    # same arithmetic path as weighted_asmd so uniform weights reproduce it exactly
    m1, m0 = weighted_means(features, sample, uniform_weights(sample))
    s1, s0 = _group_stats(features.values, sample.treatment)
    return _standardized(m1 - m0, s1, s0)


def weighted_asmd(features, sample, weights) -> np.ndarray:
    """ASMD of the weighted group means; denominators use unweighted variances."""
    w = _check_weights(sample, weights)
    m1, m0 = weighted_means(features, sample, w)
    s1, s0 = _group_stats(features.values, sample.treatment)
    return _standardized(m1 - m0, s1, s0)


def _pooled_quadratic(features, sample, d):
    metric = build_metric("W2", pooled_covariance(features, sample))
    return float(np.sum(metric.rotate(d) ** 2))


def mahalanobis_distance(features, sample) -> float:
    """Squared Mahalanobis distance between the two group feature means."""
    return mim(features, sample, uniform_weights(sample))


def mim(features, sample, weights) -> float:
    """Squared Mahalanobis distance between the weighted group means.

    A singular pooled covariance falls back to the ridge ladder of the W2
    metric.
    """
    w = _check_weights(sample, weights)
    m1, m0 = weighted_means(features, sample, w)
    return _pooled_quadratic(features, sample, m1 - m0)


def gmim(features, sample, group, weights, metric, target=None) -> float:
    """``d' W d`` with ``d`` the weighted group mean minus the target mean.

    ``weights`` is either length n (entries outside ``group`` ignored) or
    one entry per group member in sample order.
    """
    F = features.values
    if metric.k != F.shape[1]:
        raise DimensionMismatch(f"metric dimension {metric.k} does not match {F.shape[1]} features")
    members = sample.treatment == group
    w = np.asarray(weights, dtype=float)
    if w.shape == (sample.n,):
        w = w[members]
    if w.shape != (int(members.sum()),):
        raise DimensionMismatch("weights do not match the group size")
    target = features.pooled_mean if target is None else target
    d = w @ F[members] - target
    return float(np.sum(metric.rotate(d) ** 2))


def summarize(values):
    """(max, mean, lower median) of a nonempty vector."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyVector("cannot summarize an empty vector")
    s = np.sort(v)
    return float(s[-1]), float(v.mean()), float(s[(s.size - 1) // 2])


def report(features, sample, weights=None, metric=None, target=None) -> DiagnosticsReport:
    """Every imbalance measure for one weighting; GMIM uses ``metric`` (W1 by default)."""
    tag = "uniform" if weights is None else "supplied"
    w = uniform_weights(sample) if weights is None else _check_weights(sample, weights)
    if metric is None:
        metric = build_metric("W1", pooled_covariance(features, sample))
    a = weighted_asmd(features, sample, w)
    mx, mean, med = summarize(a)
    return DiagnosticsReport(
        asmd=a,
        asmd_max=mx,
        asmd_mean=mean,
        asmd_median=med,
        md=mahalanobis_distance(features, sample),
        mim=mim(features, sample, w),
        gmim_treated=gmim(features, sample, 1, w, metric, target),
        gmim_control=gmim(features, sample, 0, w, metric, target),
        weights_used=tag,
    )

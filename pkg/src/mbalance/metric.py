"""Weight matrices built from the treatment-specific feature covariances."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, FactorizationFailed, GroupTooSmall, NotSymmetric, ValidationError

logger = logging.getLogger(__name__)

W1 = "W1_diagonal"
W2 = "W2_full"
_ALIASES = {"w1": W1, "W1": W1, W1: W1, "w2": W2, "W2": W2, W2: W2}

RIDGE_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
DIAG_FLOOR = 1e-12
# Cholesky pivots whose squared ratio to the largest pivot falls below this
# are treated as a failed factorization (numerically singular).
_PIVOT_RATIO = 1e-13


def metric_kind(kind: str) -> str:
    try:
        return _ALIASES[kind]
    except KeyError:
        raise ValidationError(f"unknown metric kind {kind!r}; use 'W1' or 'W2'") from None


@dataclass(frozen=True, eq=False)
class MetricFactor:
    """A weight matrix ``W`` together with a root ``R`` such that ``W = R.T @ R``."""

    kind: str
    pooled_cov: np.ndarray
    root: np.ndarray
    matrix: np.ndarray
    ridge_used: float = 0.0
    warning: bool = False

    @property
    def k(self) -> int:
        return self.root.shape[0]

    def rotate(self, v: np.ndarray) -> np.ndarray:
        """Apply ``R`` to a vector or to each row of a matrix."""
        return np.asarray(v) @ self.root.T


def _group_cov(F):
    if F.shape[0] < 2:
        raise GroupTooSmall("within-group covariance needs at least 2 subjects")
    return np.atleast_2d(np.cov(F, rowvar=False, ddof=1))


def pooled_covariance(features, sample) -> np.ndarray:
    """``(S1 + S0) / 2`` with unbiased within-group covariances of the features."""
    F = features.values
    if F.shape[0] != sample.n:
        raise DimensionMismatch("features and sample have different row counts")
    T = sample.treatment
    return 0.5 * (_group_cov(F[T == 1]) + _group_cov(F[T == 0]))


def _cholesky_ok(L):
    d = np.abs(np.diag(L))
    return np.all(np.isfinite(L)) and d.min() ** 2 > _PIVOT_RATIO * d.max() ** 2


def build_metric(kind, pooled_cov, ridge_ladder=RIDGE_LADDER) -> MetricFactor:
    """Build W1 (inverse pooled variances) or W2 (inverse pooled covariance).

    For W2 a ridge ``lam * trace(S) / K`` is added, walking ``ridge_ladder``
    until the Cholesky factor ``S + lam I = L L^T`` is well defined; the
    root is ``L^{-1}``.
    """
    kind = metric_kind(kind)
    S = np.atleast_2d(np.asarray(pooled_cov, dtype=float))
    K = S.shape[0]
    if S.shape != (K, K) or not np.allclose(S, S.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise NotSymmetric("pooled covariance must be a symmetric square matrix")
    S = 0.5 * (S + S.T)

    if kind == W1:
        d = np.diag(S).copy()
        top = d.max()
        floor = DIAG_FLOOR * top if top > 0 else 1.0
        floored = d < floor
        d[floored] = floor
        root = np.diag(1.0 / np.sqrt(d))
        return MetricFactor(W1, S, root, np.diag(1.0 / d), 0.0, bool(floored.any()))

    scale = max(float(np.trace(S)) / K, 0.0)
    for lam in ridge_ladder:
        ridge = lam * scale
        try:
            L = np.linalg.cholesky(S + ridge * np.eye(K))
        except np.linalg.LinAlgError:
            continue
        if not _cholesky_ok(L):
            continue
        root = solve_triangular(L, np.eye(K), lower=True)
        if ridge > 0:
            logger.info("W2 metric needed ridge %.3g to factorize", ridge)
        return MetricFactor(W2, S, root, root.T @ root, float(ridge), ridge > 0)
    raise FactorizationFailed("pooled covariance could not be factorized after ridge escalation")


def metric_for(features, sample, kind="W1") -> MetricFactor:
    return build_metric(kind, pooled_covariance(features, sample))

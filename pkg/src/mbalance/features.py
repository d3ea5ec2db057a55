"""Basis-function maps evaluated on a sample."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import BandwidthUnresolvable, ValidationError

KINDS = ("identity", "interactions", "moments2", "kernel_gaussian")


@dataclass(frozen=True)
class FeatureSpec:
    """Which basis to evaluate.

    ``bandwidth`` only matters for ``kernel_gaussian``; ``None`` selects the
    median heuristic.
    """

    kind: str = "identity"
    bandwidth: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}; expected one of {KINDS}")
        if self.bandwidth is not None:
            b = float(self.bandwidth)
            if not (np.isfinite(b) and b > 0):
                raise ValidationError(f"kernel bandwidth must be positive and finite, got {self.bandwidth}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    pooled_mean: np.ndarray
    spec: FeatureSpec
    bandwidth: Optional[float] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values, spec=None, bandwidth=None) -> "FeatureMatrix":
        values = np.array(values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if not np.all(np.isfinite(values)):
            raise ValidationError("feature values must be finite")
        mean = values.mean(axis=0)
        values.setflags(write=False)
        mean.setflags(write=False)
        return cls(values, mean, spec or FeatureSpec("identity"), bandwidth)

    def columns(self, idx) -> "FeatureMatrix":
        return FeatureMatrix.from_values(self.values[:, idx], self.spec, self.bandwidth)


def pairwise_products(X: np.ndarray) -> np.ndarray:
    """Columns ``X_j * X_k`` for ``j < k`` in lexicographic order."""
    j, k = np.triu_indices(X.shape[1], k=1)
    return X[:, j] * X[:, k]


def median_heuristic_bandwidth(covariates) -> float:
    """Lower median of the nonzero pairwise Euclidean distances."""
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    d = pdist(X) if X.shape[0] >= 2 else np.empty(0)
    d = np.sort(d[d > 0])
    if d.size == 0:
        raise BandwidthUnresolvable("median heuristic needs at least two distinct rows")
    return float(d[(d.size - 1) // 2])


def gaussian_kernel(U, V, bandwidth: float) -> np.ndarray:
    d2 = cdist(np.atleast_2d(U), np.atleast_2d(V), "sqeuclidean")
    return np.exp(-d2 / (2.0 * bandwidth**2))


def evaluate(spec: FeatureSpec, sample) -> FeatureMatrix:
    """Evaluate ``spec`` on every row of ``sample``.

    The kernel basis has one column per subject: column i is K(., X_i).
    """
    X = sample.covariates
    if spec.kind == "identity":
        return FeatureMatrix.from_values(X, spec)
    if spec.kind == "interactions":
        return FeatureMatrix.from_values(pairwise_products(X), spec)
    if spec.kind == "moments2":
        return FeatureMatrix.from_values(np.hstack([X, X**2, pairwise_products(X)]), spec)
    sigma = spec.bandwidth if spec.bandwidth is not None else median_heuristic_bandwidth(X)
    return FeatureMatrix.from_values(gaussian_kernel(X, X, sigma), spec, float(sigma))

"""Scenario generators and the Monte Carlo harness.

Random numbers come from numpy's Philox counter-based generator keyed by
``SeedSequence([seed, replicate])``; normals are numpy's ziggurat
``standard_normal``. Every draw within a replicate happens in a fixed order
(covariates, treatment uniforms, noise), so a ``(spec, seed, replicate)``
triple is bit-reproducible.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _true_ate
from .dataset import Sample
from .diagnostics import gmim, weighted_asmd
from .errors import MBalanceError, UnknownScenario, ValidationError
from .estimator import PipelineConfig, ate, fit
from .features import FeatureMatrix, FeatureSpec, evaluate
from .metric import build_metric, pooled_covariance
from .tuning import DeltaGrid

SCENARIOS = ("A", "B", "C", "D", "E", "F", "M1", "M2")
_DEFAULT_NP = {"A": (200, 10), "B": (200, 10), "C": (200, 10), "D": (1000, 10),
               "E": (200, 100), "F": (200, 100), "M1": (200, 100), "M2": (200, 100)}

_ANALYTIC_ATE = {"A": 0.0, "C": 5.0, "D": 10.0, "E": 0.0, "F": 0.0}

# Two readings of the high-dimensional scenarios (E, F, M1, M2).
# "published" reproduces the reported tables: Cov(X_j, X_k) = 0.5^|j-k| and an
# M1 outcome of T*m + (1-T)*m/2. "printed" follows the formulas as written:
# 0.5 off the diagonal and 2*T*m + (1-T)*m.
HD_SCENARIOS = ("E", "F", "M1", "M2")
DESIGNS = ("published", "printed")


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    n: int
    p: int
    true_ate: float
    features: FeatureSpec = FeatureSpec("identity")
    design: str = "published"

    @property
    def label(self) -> str:
        return self.id if self.id in ("A", "B", "C", "D") else f"{self.id}(p={self.p})"


def scenario(id: str, n: Optional[int] = None, p: Optional[int] = None,
             design: str = "published") -> ScenarioSpec:
    """Simulation scenario ``id`` with its default ``(n, p)`` unless overridden.

    ``design`` only affects E, F, M1 and M2 (see ``DESIGNS``).
    """
    if id not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {id!r}; expected one of {SCENARIOS}")
    if design not in DESIGNS:
        raise ValidationError(f"unknown design {design!r}; expected one of {DESIGNS}")
    n0, p0 = _DEFAULT_NP[id]
    n = n0 if n is None else int(n)
    p = p0 if p is None else int(p)
    if id in ("A", "B", "C", "D") and p != 10:
        raise ValidationError(f"scenario {id} is defined for p=10 only")
    if id in ("M1", "M2") and p != 100:
        raise ValidationError(f"scenario {id} is defined for p=100 only")
    if id in ("E", "F") and p < 6:
        raise ValidationError(f"scenario {id} needs p >= 6")
    if n < 4:
        raise ValidationError("need n >= 4")
    design = design if id in HD_SCENARIOS else "published"
    spec = ScenarioSpec(id, n, p, 0.0, FeatureSpec("interactions" if id == "B" else "identity"), design)
    return replace(spec, true_ate=true_ate(spec))


def true_ate(spec: ScenarioSpec) -> float:
    """Population ATE; B, M1 and M2 use the cached Monte Carlo oracle."""
    if spec.id in _ANALYTIC_ATE:
        return _ANALYTIC_ATE[spec.id]
    if spec.id == "M1" and spec.design == "printed":
        return _true_ate.ORACLE["M1_printed"]
    return _true_ate.ORACLE[spec.id]


def rng_for(seed: int, replicate: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


@lru_cache(maxsize=16)
def _equicorr_chol(p: int, rho: float = 0.5) -> np.ndarray:
    S = np.full((p, p), rho)
    np.fill_diagonal(S, 1.0)
    L = np.linalg.cholesky(S)
    L.setflags(write=False)
    return L


@lru_cache(maxsize=16)
def _ar1_chol(p: int, rho: float = 0.5) -> np.ndarray:
    k = np.arange(p)
    L = np.linalg.cholesky(rho ** np.abs(k[:, None] - k[None, :]))
    L.setflags(write=False)
    return L


def hd_covariance_root(p: int, design: str = "published") -> np.ndarray:
    """Lower Cholesky factor of the E/F/M covariate covariance."""
    return _ar1_chol(p) if design == "published" else _equicorr_chol(p)


def _bernoulli(rng, prob):
    return (rng.random(prob.shape[0]) < prob).astype(np.int8)


def _logistic_neg(eta):
    # 1 / (1 + exp(eta)) without overflow.
    return 0.5 * (1.0 - np.tanh(0.5 * eta))


def _gen_A(rng, n, p):
    Z = rng.standard_normal((n, 10))
    X = np.column_stack([
        np.exp(Z[:, 0] / 2),
        Z[:, 1] / (1 + np.exp(Z[:, 0])),
        (Z[:, 0] * Z[:, 2] + 0.6) ** 3,
        (Z[:, 1] + Z[:, 3] + 20) ** 2,
        Z[:, 4:10],
    ])
    T = _bernoulli(rng, _logistic_neg(0.5 * Z[:, 0] + 0.1 * Z[:, 3]))
    eps = rng.standard_normal(n)
    Y = 210 + (1.5 * T - 0.5) * 13.7 * Z[:, :4].sum(axis=1) + eps
    return X, T, Y


def _two_group_normals(rng, n, treated_mean, control_mean):
    T = (rng.random(n) < 0.5).astype(np.int8)
    E = rng.standard_normal((n, 10))
    L1 = _equicorr_chol(10)
    X = np.where(T[:, None] == 1, treated_mean + E @ L1.T, control_mean + E)
    return X, T


def _cyclic_products(X):
    return (X * np.roll(X, -1, axis=1)).sum(axis=1)


def _gen_B(rng, n, p):
    X, T = _two_group_normals(rng, n, 1.0, 1.0)
    Y = (1 + T) * (X.sum(axis=1) + _cyclic_products(X)) + rng.standard_normal(n)
    return X, T, Y


def _gen_C(rng, n, p):
    X, T = _two_group_normals(rng, n, 1.0, 0.0)
    Y = (1 + T) * X.sum(axis=1) + rng.standard_normal(n)
    return X, T, Y


def _gen_D(rng, n, p):
    X = 1.0 + rng.standard_normal((n, 10))
    S = X.sum(axis=1)
    T = _bernoulli(rng, _logistic_neg(math.log(19.0) + S - 10.0))
    Y = (1 + T) * S + rng.standard_normal(n)
    return X, T, Y


def _hd_covariates(rng, n, p, design):
    return rng.standard_normal((n, p)) @ hd_covariance_root(p, design).T


def _sparse_eta(X):
    return X[:, 0] + X[:, 1:6].sum(axis=1) / 2


def _dense_eta(X, p):
    return X[:, 0] + X[:, 1:5].sum(axis=1) / 2 + 10.0 * X[:, 5:p].sum(axis=1) / p


def _gen_E(rng, n, p, design="published"):
    X = _hd_covariates(rng, n, p, design)
    T = _bernoulli(rng, _logistic_neg(_sparse_eta(X)))
    s5 = X[:, :5].sum(axis=1)
    Y = T * s5 + (1 - T) * s5 / 2 + rng.standard_normal(n)
    return X, T, Y


def _gen_F(rng, n, p, design="published"):
    X = _hd_covariates(rng, n, p, design)
    T = _bernoulli(rng, _logistic_neg(_dense_eta(X, p)))
    s = X.sum(axis=1)
    Y = T * (10 * s / p) + (1 - T) * (5 * s / p) + rng.standard_normal(n)
    return X, T, Y


def _gen_M1(rng, n, p, design="published"):
    X = _hd_covariates(rng, n, p, design)
    T = _bernoulli(rng, _logistic_neg(_sparse_eta(X)))
    m = X[:, :6].sum(axis=1) + (X[:, :6] ** 2).sum(axis=1)
    if design == "printed":
        Y = 2 * T * m + (1 - T) * m + rng.standard_normal(n)
    else:
        Y = T * m + (1 - T) * m / 2 + rng.standard_normal(n)
    return X, T, Y


def _gen_M2(rng, n, p, design="published"):
    X = _hd_covariates(rng, n, p, design)
    T = _bernoulli(rng, _logistic_neg(_dense_eta(X, p)))
    m = X.sum(axis=1) + (X[:, :50] ** 2).sum(axis=1)
    Y = T * m / 10 + (1 - T) * m / 20 + rng.standard_normal(n)
    return X, T, Y


_GENERATORS = {"A": _gen_A, "B": _gen_B, "C": _gen_C, "D": _gen_D,
               "E": _gen_E, "F": _gen_F, "M1": _gen_M1, "M2": _gen_M2}


def generate(spec: ScenarioSpec, seed: int, replicate: int = 0) -> Sample:
    if spec.id not in _GENERATORS:
        raise UnknownScenario(f"unknown scenario {spec.id!r}")
    rng = rng_for(seed, replicate)
    if spec.id in HD_SCENARIOS:
        X, T, Y = _GENERATORS[spec.id](rng, spec.n, spec.p, spec.design)
    else:
        X, T, Y = _GENERATORS[spec.id](rng, spec.n, spec.p)
    return Sample(X, T, Y, covariate_names=tuple(f"X{j + 1}" for j in range(X.shape[1])))


# --- methods -----------------------------------------------------------------

KERNEL = FeatureSpec("kernel_gaussian")


def method_config(method: str, spec: ScenarioSpec, delta="grid", grid: Optional[DeltaGrid] = None,
                  kappa: Optional[float] = None) -> PipelineConfig:
    """Pipeline for a table column label: Unad, MB, MB2, kernelMB or hdMB."""
    extra = {}
    if grid is not None:
        extra["grid"] = grid
    if kappa is not None:
        extra["kappa"] = kappa
    if method == "Unad":
        return PipelineConfig(features=spec.features, method="uniform")
    if method == "MB":
        return PipelineConfig(features=spec.features, metric="W1", delta=delta, **extra)
    if method == "MB2":
        return PipelineConfig(features=spec.features, metric="W2", delta=delta, **extra)
    if method == "kernelMB":
        return PipelineConfig(features=KERNEL, metric="W1", delta=delta, **extra)
    if method == "hdMB":
        return PipelineConfig(features=FeatureSpec("identity"), method="hdmb", delta=delta, **extra)
    raise ValidationError(f"unknown method {method!r}")


METHOD_LABELS = ("Unad", "MB", "MB2", "kernelMB", "hdMB")


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    estimate: float
    mean_weighted_asmd: float
    gmim_total: float
    delta_treated: float
    delta_control: float
    k0: Optional[int] = None
    failed: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class McSummary:
    method: str
    scenario: str
    bias: float
    sd: float
    rmse: float
    mean_weighted_asmd: float
    gmim_total: float
    reps: int
    seed: int
    failures: int = 0
    partial: bool = False
    true_ate: float = 0.0

    def row(self) -> str:
        return (f"{self.scenario:<10} {self.method:<9} Bias {self.bias:7.2f}  SD {self.sd:6.2f}  "
                f"RMSE {self.rmse:6.2f}  meanASMD {self.mean_weighted_asmd:5.2f}  GMIM {self.gmim_total:6.2f}")


def evaluation_features(spec: ScenarioSpec, sample: Sample) -> FeatureMatrix:
    """Basis on which reported imbalance is measured (the scenario's basis)."""
    return evaluate(spec.features, sample)


def run_replicate(spec: ScenarioSpec, config: PipelineConfig, seed: int, replicate: int,
                  sample: Optional[Sample] = None) -> ReplicateRecord:
    sample = sample if sample is not None else generate(spec, seed, replicate)
    try:
        f = fit(sample, config)
    except MBalanceError as exc:
        nan = float("nan")
        return ReplicateRecord(replicate, nan, nan, nan, nan, nan, failed=True, error=f"{type(exc).__name__}: {exc}")
    w = f.weights
    est = ate(sample, f.solutions)
    feats = evaluation_features(spec, sample)
    W1 = build_metric("W1", pooled_covariance(feats, sample))
    masmd = float(np.mean(weighted_asmd(feats, sample, w)))
    g = gmim(feats, sample, 1, w, W1) + gmim(feats, sample, 0, w, W1)
    k0 = f.hdmb.k0 if f.hdmb is not None else None
    return ReplicateRecord(replicate, est, masmd, g, f.solutions[1].delta, f.solutions[0].delta, k0)


def _run_one(args):
    spec, config, seed, r = args
    return run_replicate(spec, config, seed, r)


def summarize_records(records, method: str, spec: ScenarioSpec, seed: int) -> McSummary:
    ok = [r for r in records if not r.failed]
    if len(ok) < 2:
        raise MBalanceError(f"{len(records) - len(ok)} of {len(records)} replicates failed")
    est = np.array([r.estimate for r in ok])
    err = est - spec.true_ate
    failures = len(records) - len(ok)
    return McSummary(
        method=method,
        scenario=spec.label,
        bias=float(math.fsum(err) / err.size),
        sd=float(est.std(ddof=1)),
        rmse=float(math.sqrt(math.fsum(err * err) / err.size)),
        mean_weighted_asmd=float(math.fsum(r.mean_weighted_asmd for r in ok) / len(ok)),
        gmim_total=float(math.fsum(r.gmim_total for r in ok) / len(ok)),
        reps=len(records),
        seed=seed,
        failures=failures,
        partial=failures > 0.01 * len(records),
        true_ate=spec.true_ate,
    )


def run_monte_carlo(spec: ScenarioSpec, config, reps: int, seed: int, threads: int = 1,
                    method: Optional[str] = None, return_records: bool = False):
    """Repeat generate -> fit -> estimate ``reps`` times and aggregate.

    ``config`` is a :class:`PipelineConfig` or a method label accepted by
    :func:`method_config`. Replicate ``r`` uses RNG stream ``(seed, r)``;
    results do not depend on ``threads``.
    """
    if reps < 2:
        raise ValidationError("need at least 2 replicates")
    if isinstance(config, str):
        method = method or config
        config = method_config(config, spec)
    method = method or config.method
    args = [(spec, config, seed, r) for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_one, args, chunksize=max(1, reps // (8 * threads))))
    else:
        records = [_run_one(a) for a in args]
    summary = summarize_records(records, method, spec, seed)
    return (summary, records) if return_records else summary

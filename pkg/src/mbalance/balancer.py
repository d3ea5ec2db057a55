"""Mahalanobis balancing weights for one treatment group.

For group members with rotated, centered features ``z_i = R (phi_i - target)``
(``R`` the metric root, ``target`` the pooled feature mean by default) the
entropy dual is

    minimize  sum_i exp(theta' z_i - 1) + sqrt(delta) * ||theta||_2

and the weights are ``w_i = exp(theta' z_i - 1)``, normalized to sum to one
within the group. The ``normalized`` variant folds the sum-to-one
constraint into the primal; its dual is a log-sum-exp and at ``delta = 0``
it is entropy balancing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, softmax

from . import solver
from .errors import DimensionMismatch, EmptyGroup, Infeasible, NumericalFailure, ValidationError

STANDARD = "standard"
NORMALIZED = "normalized"

EXP_CLAMP = 700.0
WARM_START_STEP = 1e-3
THETA_CAP = 1e6


@dataclass(frozen=True, eq=False)
class DualProblem:
    Z: np.ndarray
    delta: float
    group: int
    variant: str = STANDARD

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValidationError(f"delta must be a finite nonnegative number, got {self.delta}")
        if self.variant not in (STANDARD, NORMALIZED):
            raise ValidationError(f"unknown variant {self.variant!r}")

    @property
    def k(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True, eq=False)
class BalanceSolution:
    """Dual solution and the recovered weights for the members of ``group``.

    ``indices`` are the sample rows the weights refer to, in sample order.
    """

    theta: np.ndarray
    weights_unnormalized: np.ndarray
    weights: np.ndarray
    delta: float
    group: int
    indices: np.ndarray
    solver_status: str
    at_origin: bool
    iterations: int = 0
    variant: str = STANDARD

    def full_weights(self, n: int) -> np.ndarray:
        """Length-``n`` vector holding this group's weights and zeros elsewhere."""
        out = np.zeros(n)
        out[self.indices] = self.weights
        return out


def dual_problem(features, sample, group, metric, delta, target=None, variant=STANDARD) -> DualProblem:
    F = features.values
    if F.shape[0] != sample.n:
        raise DimensionMismatch("features and sample have different row counts")
    if metric.k != F.shape[1]:
        raise DimensionMismatch(f"metric dimension {metric.k} does not match {F.shape[1]} features")
    target = features.pooled_mean if target is None else np.asarray(target, dtype=float)
    if target.shape != (F.shape[1],):
        raise DimensionMismatch("target mean has the wrong length")
    idx = np.flatnonzero(sample.treatment == group)
    if idx.size == 0:
        raise EmptyGroup(f"no subject has treatment={group}")
    Z = metric.rotate(F[idx] - target)
    return DualProblem(Z, float(delta), int(group), variant)


def _standard_objective(Z, delta):
    root_delta = math.sqrt(delta)

    def fun(theta):
        e = Z @ theta - 1.0
        np.minimum(e, EXP_CLAMP, out=e)
        w = np.exp(e)
        norm = math.sqrt(float(theta @ theta))
        value = float(w.sum()) + root_delta * norm
        grad = Z.T @ w
        if norm > 0:
            grad = grad + (root_delta / norm) * theta
        return value, grad

    return fun


def _normalized_objective(Z, delta):
    root_delta = math.sqrt(delta)

    def fun(theta):
        e = Z @ theta
        lse = float(logsumexp(e))
        p = np.exp(e - lse)
        norm = math.sqrt(float(theta @ theta))
        value = lse + root_delta * norm
        grad = Z.T @ p
        if norm > 0:
            grad = grad + (root_delta / norm) * theta
        return value, grad

    return fun


def dual_objective(problem: DualProblem, theta):
    """Value and gradient of the dual at ``theta``.

    At ``theta = 0`` the norm term contributes the zero subgradient.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.k,) or not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be a finite vector of length K")
    make = _standard_objective if problem.variant == STANDARD else _normalized_objective
    value, grad = make(problem.Z, problem.delta)(theta)
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise NumericalFailure("dual objective is not finite")
    return value, grad


def _origin_gradient(problem):
    if problem.variant == STANDARD:
        return math.exp(-1.0) * problem.Z.sum(axis=0)
    return problem.Z.mean(axis=0)


def origin_optimality(problem: DualProblem) -> bool:
    """True iff zero is in the subdifferential of the dual at ``theta = 0``."""
    return float(np.linalg.norm(_origin_gradient(problem))) <= math.sqrt(problem.delta)


def _warm_start(problem):
    g = _origin_gradient(problem)
    if problem.delta == 0:
        return np.zeros(problem.k)
    return -WARM_START_STEP * g / np.linalg.norm(g)


def _uniform_solution(problem, idx, variant):
    m = idx.size
    w = np.full(m, 1.0 / m)
    raw = np.full(m, math.exp(-1.0)) if variant == STANDARD else w.copy()
    return BalanceSolution(np.zeros(problem.k), raw, w, problem.delta, problem.group, idx,
                           solver.CONVERGED, True, 0, variant)


def _hessian(problem, theta):
    Z = problem.Z
    e = Z @ theta
    if problem.variant == STANDARD:
        w = np.exp(np.minimum(e - 1.0, EXP_CLAMP))
        H = (Z * w[:, None]).T @ Z
    else:
        p = softmax(e)
        zbar = p @ Z
        H = (Z * p[:, None]).T @ Z - np.outer(zbar, zbar)
    norm = float(np.linalg.norm(theta))
    if problem.delta > 0 and norm > 0:
        u = theta / norm
        H += (math.sqrt(problem.delta) / norm) * (np.eye(problem.k) - np.outer(u, u))
    return H


def _polish(problem, fun, res, steps=3):
    """A few guarded Newton steps from a converged BFGS point.

    BFGS stops anywhere inside its gradient tolerance, so two runs on
    equivalent inputs can land 1e-8 apart; Newton steps pull both to the
    optimum to near machine precision. A step is kept only if it lowers
    the gradient norm without raising the objective.
    """
    x, f, g = res.argmin, res.value, res.gradient
    for _ in range(steps):
        try:
            step = np.linalg.solve(_hessian(problem, x), g)
        except np.linalg.LinAlgError:
            break
        xn = x - step
        if not np.all(np.isfinite(xn)) or not np.any(xn):
            break
        fn, gn = fun(xn)
        if not (math.isfinite(fn) and fn <= f + 1e-12 * max(1.0, abs(f)) and np.linalg.norm(gn) < np.linalg.norm(g)):
            break
        x, f, g = xn, fn, gn
    return replace(res, argmin=x, value=f, gradient=g, grad_norm=float(np.abs(g).max()))


def solve_dual(problem: DualProblem, tol=1e-8, max_iter=500, x_cap=None) -> solver.SolveResult:
    make = _standard_objective if problem.variant == STANDARD else _normalized_objective
    fun = make(problem.Z, problem.delta)
    res = solver.minimize(fun, _warm_start(problem), tol=tol, max_iter=max_iter, x_cap=x_cap)
    # Near the optimum a large dual value can leave the Armijo test below
    # rounding level; polishing on the gradient settles those runs too.
    if res.status in (solver.CONVERGED, solver.LINE_SEARCH_FAILED):
        res = _polish(problem, fun, res)
        if res.grad_norm <= tol:
            res = replace(res, status=solver.CONVERGED)
    return res


def solve_group(features, sample, group, metric, delta, target=None, tol=1e-8, max_iter=500) -> BalanceSolution:
    """Balancing weights for one group from the regularized entropy dual.

    ``target`` replaces the pooled feature mean as the balancing target,
    e.g. the control-group mean for ATC weights.
    """
    problem = dual_problem(features, sample, group, metric, delta, target)
    idx = np.flatnonzero(sample.treatment == group)
    if origin_optimality(problem):
        return _uniform_solution(problem, idx, STANDARD)
    res = solve_dual(problem, tol, max_iter)
    theta = res.argmin
    e = problem.Z @ theta
    if res.converged and float(e.max()) - 1.0 > EXP_CLAMP:
        raise NumericalFailure("exponent clamp active at the converged dual solution")
    raw = np.exp(np.minimum(e - 1.0, EXP_CLAMP))
    return BalanceSolution(theta, raw, softmax(e), problem.delta, problem.group, idx,
                           res.status, False, res.iterations, STANDARD)


def solve_group_normalized(features, sample, group, metric, delta, target=None,
                           tol=1e-8, max_iter=500) -> BalanceSolution:
    """Weights from the variant with the sum-to-one constraint in the primal.

    Raises:
        Infeasible: the dual runs off to infinity (``||theta|| > 1e6``),
            which happens when the target mean is outside what the group
            can reach at this ``delta``.
    """
    problem = dual_problem(features, sample, group, metric, delta, target, NORMALIZED)
    idx = np.flatnonzero(sample.treatment == group)
    if origin_optimality(problem):
        return _uniform_solution(problem, idx, NORMALIZED)
    res = solve_dual(problem, tol, max_iter, x_cap=THETA_CAP)
    if res.status == solver.DIVERGED:
        raise Infeasible(f"dual diverged for group {group} at delta={delta:g}; primal is infeasible")
    w = softmax(problem.Z @ res.argmin)
    return BalanceSolution(res.argmin, w, w, problem.delta, problem.group, idx,
                           res.status, False, res.iterations, NORMALIZED)


def residual_norm(problem: DualProblem, solution: BalanceSolution) -> float:
    """``||sum_i w_i z_i||_2`` for the unnormalized weights (the primal constraint)."""
    return float(np.linalg.norm(problem.Z.T @ solution.weights_unnormalized))

"""Dense BFGS with a strong-Wolfe line search.

The minimizer is self-contained so that iterate sequences are reproducible
bit-for-bit across environments. ``fun`` maps a point to ``(value, gradient)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import NumericalFailure

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
LINE_SEARCH_FAILED = "LineSearchFailed"
DIVERGED = "Diverged"

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True, eq=False)
class SolveResult:
    argmin: np.ndarray
    value: float
    gradient: np.ndarray
    grad_norm: float
    iterations: int
    status: str
    evaluations: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _cubic_min(a, fa, da, b, fb, db):
    # Minimizer of the cubic interpolating (f, f') at a and b, or None.
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if not disc >= 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


class _LineSearch:
    """Strong-Wolfe search along ``d`` from ``x``."""

    def __init__(self, fun, x, f0, g0, d, c1, c2, max_evals, alpha_max):
        self.fun, self.x, self.d = fun, x, d
        self.f0, self.dphi0 = f0, float(g0 @ d)
        self.c1, self.c2 = c1, c2
        self.budget = max_evals
        self.alpha_max = alpha_max
        self.evals = 0
        self.best = None  # (alpha, f, g) with lowest value seen satisfying Armijo

    def phi(self, a):
        self.evals += 1
        xa = self.x + a * self.d
        with np.errstate(over="ignore", invalid="ignore"):
            f, g = self.fun(xa)
            f = float(f)
            if not (math.isfinite(f) and np.all(np.isfinite(g))):
                return math.inf, math.nan, None
            da = float(g @ self.d)
        if not math.isfinite(da):
            return math.inf, math.nan, None
        if f <= self.f0 + self.c1 * a * self.dphi0 and (self.best is None or f < self.best[1]):
            self.best = (a, f, g)
        return f, da, g

    def armijo_fails(self, a, f):
        return f > self.f0 + self.c1 * a * self.dphi0

    def curvature_ok(self, da):
        return abs(da) <= -self.c2 * self.dphi0

    def search(self, alpha1):
        a_prev, f_prev, d_prev = 0.0, self.f0, self.dphi0
        a = min(alpha1, self.alpha_max)
        first = True
        while self.evals < self.budget:
            f, da, g = self.phi(a)
            if not math.isfinite(f):
                # Overshot into a region where the objective cannot be evaluated.
                return self.zoom(a_prev, f_prev, d_prev, a, f, da)
            if self.armijo_fails(a, f) or (not first and f >= f_prev):
                return self.zoom(a_prev, f_prev, d_prev, a, f, da)
            if self.curvature_ok(da):
                return a, f, g
            if da >= 0:
                return self.zoom(a, f, da, a_prev, f_prev, d_prev)
            if a >= self.alpha_max:
                return a, f, g
            a_prev, f_prev, d_prev = a, f, da
            a = min(4.0 * a, self.alpha_max)
            first = False
        return self.fallback()

    def zoom(self, lo, flo, dlo, hi, fhi, dhi):
        while self.evals < self.budget:
            w = hi - lo
            a = None
            if math.isfinite(fhi) and math.isfinite(dhi):
                a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            lo_edge, hi_edge = min(lo, hi), max(lo, hi)
            margin = 0.1 * abs(w)
            if a is None or not (lo_edge + margin <= a <= hi_edge - margin):
                a = lo + 0.5 * w
            if a == lo or a == hi:
                break
            f, da, g = self.phi(a)
            if not math.isfinite(f) or self.armijo_fails(a, f) or f >= flo:
                hi, fhi, dhi = a, f, da
                continue
            if self.curvature_ok(da):
                return a, f, g
            if da * (hi - lo) >= 0:
                hi, fhi, dhi = lo, flo, dlo
            lo, flo, dlo = a, f, da
        return self.fallback()

    def fallback(self):
        # Accept the best sufficient-decrease point if the curvature condition
        # could not be met within budget.
        if self.best is not None and self.best[1] < self.f0:
            return self.best
        return None


def minimize(
    fun: Objective,
    x0,
    tol: float = 1e-8,
    max_iter: int = 500,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_line_evals: int = 60,
    x_cap: Optional[float] = None,
) -> SolveResult:
    """Minimize a smooth function with BFGS.

    Stops when the gradient infinity-norm is at most ``tol``. If ``x_cap``
    is given and an iterate's Euclidean norm exceeds it, the run ends with
    status ``Diverged``.

    Raises:
        NumericalFailure: the objective or gradient is not finite at ``x0``
            or at an accepted iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    evals = 1
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalFailure("objective is not finite at the starting point")
    n = x.size
    H = np.eye(n)
    first = True
    status = MAX_ITERATIONS
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm <= tol:
            status = CONVERGED
            break
        if it >= max_iter:
            break
        d = -H @ g
        if not float(g @ d) < 0:
            # Lost positive definiteness numerically; restart from steepest descent.
            H = np.eye(n)
            d = -g
            first = True
        alpha1 = min(1.0, 1.0 / float(np.linalg.norm(g))) if first else 1.0
        alpha_max = math.inf
        if x_cap is not None:
            alpha_max = max(1.0, 10.0 * x_cap / max(float(np.linalg.norm(d)), 1e-300))
        ls = _LineSearch(fun, x, f, g, d, c1, c2, max_line_evals, alpha_max)
        found = ls.search(alpha1)
        evals += ls.evals
        if found is None:
            status = LINE_SEARCH_FAILED
            break
        a, f_new, g_new = found
        s = a * d
        x = x + s
        y = g_new - g
        f, g = f_new, g_new
        it += 1
        if x_cap is not None and float(np.linalg.norm(x)) > x_cap:
            status = DIVERGED
            break
        ys = float(y @ s)
        if ys > 1e-12 * float(np.linalg.norm(y)) * float(np.linalg.norm(s)):
            if first:
                H = np.eye(n) * (ys / float(y @ y))
                first = False
            rho = 1.0 / ys
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalFailure("objective became non-finite at an accepted iterate")
    gnorm = float(np.max(np.abs(g))) if n else 0.0
    return SolveResult(x, f, g, gnorm, it, status, evals)

"""Cyclic coordinate descent for the L1-penalized least-squares objective

    sum_i (y_i - b0 - sum_j b_j x_ij)^2 + lam * sum_j |b_j|

Note the objective is NOT scaled by 1/(2n): the soft-threshold level in the
coordinate update is therefore lam/2, and lambda values are not
interchangeable with libraries that use the scaled convention.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LassoProblem:
    X: np.ndarray        # n samples x p features, standardized columns
    y: np.ndarray        # centered target, length n
    lam: float

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y length must match the number of rows of X")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("non-finite values in problem data")
        if self.lam < 0.0:
            raise ValueError("lambda must be >= 0")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class LassoFit:
    beta0: float
    beta: np.ndarray
    objective_trace: list
    sweeps: int


@dataclass
class KktReport:
    max_violation: float
    violations: np.ndarray
    passed: np.ndarray = field(init=False)
    tol: float = 1e-6

    def __post_init__(self):
        self.passed = self.violations <= self.tol

    @property
    def ok(self):
        return bool(np.all(self.passed))


def soft_threshold(z, gamma):
    """sign(z) * max(|z| - gamma, 0)."""
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def objective(problem, beta0, beta):
    """The penalized objective evaluated directly from its definition."""
    r = problem.y - beta0 - problem.X @ beta
    return float(r @ r + problem.lam * np.abs(beta).sum())


def lasso_fit(problem, tol=1e-8, max_sweeps=10_000):
    """Cyclic coordinate descent with an unpenalized closed-form intercept.

    Each sweep updates the intercept, then every coordinate in order; it
    stops when the largest coefficient change in a sweep drops below ``tol``.
    All-zero columns keep beta_j = 0. The per-sweep objective trace is
    non-increasing because every update exactly minimizes the 1-D objective.
    """
    X, y, lam = problem.X, problem.y, problem.lam
    n, p = problem.n, problem.p
    if n < 2 or p < 1:
        raise ValueError("need n >= 2 samples and p >= 1 features")
    col_sq = (X ** 2).sum(axis=0)
    beta = np.zeros(p)
    beta0 = float(y.mean())
    r = y - beta0  # residual y - beta0 - X @ beta, maintained incrementally
    trace = [objective(problem, beta0, beta)]
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        delta0 = float(r.mean())
        beta0 += delta0
        r -= delta0
        max_delta = abs(delta0)
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            bj = beta[j]
            rho = float(X[:, j] @ r) + col_sq[j] * bj
            z = abs(rho) - lam / 2.0
            # snap boundary round-off to an exact zero so lambda >= lambda_max
            # yields an exactly zero solution
            if z <= lam * 1e-12:
                bj_new = 0.0
            else:
                bj_new = math.copysign(z, rho) / col_sq[j]
            if bj_new != bj:
                r += X[:, j] * (bj - bj_new)
                beta[j] = bj_new
            max_delta = max(max_delta, abs(bj_new - bj))
        trace.append(objective(problem, beta0, beta))
        if max_delta < tol:
            break
    return LassoFit(beta0, beta, trace, sweeps)


def lambda_max(problem):
    """Smallest penalty for which the all-zero solution is optimal: 2*max|X_j^T y|.

    Assumes ``y`` is centered (so the optimal intercept at beta = 0 is 0).
    """
    if problem.p == 0:
        return 0.0
    return float(2.0 * np.max(np.abs(problem.X.T @ problem.y)))


def kkt_check(problem, fit, tol=1e-6):
    """First-order optimality certificate for a fitted solution.

    With r = y - b0 - X b and g = 2 X^T r, a zero coordinate requires
    |g_j| <= lam + tol and an active coordinate requires
    |g_j - lam * sign(b_j)| <= tol.
    """
    r = problem.y - fit.beta0 - problem.X @ fit.beta
    g = 2.0 * (problem.X.T @ r)
    active = fit.beta != 0.0
    violations = np.where(
        active,
        np.abs(g - problem.lam * np.sign(fit.beta)),
        np.maximum(np.abs(g) - problem.lam, 0.0),
    )
    return KktReport(float(violations.max(initial=0.0)), violations, tol=tol)


def select_features_ovr(X, targets, n_classes, lam, tol=1e-8, max_sweeps=10_000):
    """One-vs-rest LASSO selection: union of nonzero supports over classes.

    For each class c the target is the centered indicator (1 if the sample
    belongs to c, else 0). Returns the sorted union of feature indices with a
    nonzero coefficient in any class fit.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    targets = np.asarray(targets)
    support = set()
    for c in range(n_classes):
        indicator = (targets == c).astype(np.float64)
        y = indicator - indicator.mean()
        fit = lasso_fit(LassoProblem(X, y, lam), tol=tol, max_sweeps=max_sweeps)
        support.update(np.flatnonzero(fit.beta != 0.0).tolist())
    return np.array(sorted(support), dtype=np.int64)

"""Scalar special functions for the moderated-t machinery.

Hand-rolled so the statistics path needs nothing beyond the standard
library: digamma/trigamma/tetragamma via upward recurrence plus an
asymptotic (Bernoulli-number) tail, the regularized incomplete beta via
Lentz's continued fraction, and a guarded Newton inversion of trigamma.
"""

import math
import sys

EULER_GAMMA = 0.5772156649015328606

# Recurrence pushes the argument at least this far before the asymptotic
# series is applied; keeps the truncation error below ~1e-14.
_ASYMPTOTIC_CUTOFF = 8.0


def digamma(x):
    """First derivative of log-gamma, psi(x), for x > 0."""
    if x <= 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _ASYMPTOTIC_CUTOFF:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    u = inv * inv
    # psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n)
    tail = u * (1.0 / 12 - u * (1.0 / 120 - u * (1.0 / 252 - u * (
        1.0 / 240 - u * (1.0 / 132 - u * (691.0 / 32760 - u / 12))))))
    return acc + math.log(x) - 0.5 * inv - tail


def trigamma(x):
    """Second derivative of log-gamma, psi'(x), for x > 0."""
    if x <= 0.0:
        raise ValueError(f"trigamma requires x > 0, got {x}")
    acc = 0.0
    while x < _ASYMPTOTIC_CUTOFF:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    u = inv * inv
    # psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n x^(-2n-1)
    tail = inv * u * (1.0 / 6 - u * (1.0 / 30 - u * (1.0 / 42 - u * (
        1.0 / 30 - u * (5.0 / 66 - u * (691.0 / 2730 - u * 7.0 / 6))))))
    return acc + inv + 0.5 * u + tail


def tetragamma(x):
    """Third derivative of log-gamma, psi''(x); used by the trigamma Newton solve."""
    if x <= 0.0:
        raise ValueError(f"tetragamma requires x > 0, got {x}")
    acc = 0.0
    while x < _ASYMPTOTIC_CUTOFF:
        acc -= 2.0 / (x * x * x)
        x += 1.0
    inv = 1.0 / x
    u = inv * inv
    # derivative of the trigamma expansion above
    tail = u * u * (0.5 - u * (1.0 / 6 - u * (1.0 / 6 - u * (
        3.0 / 10 - u * (5.0 / 6 - u * 691.0 / 210)))))
    return acc - u - inv * u - tail


def trigamma_inverse(y, tol=1e-10, max_iter=100):
    """Solve psi'(x) = y for x > 0 by Newton iteration.

    Started from the asymptote psi'(x) ~ 1/x, i.e. x0 = 1/y, which always
    under-shoots the root; Newton on the convex decreasing psi' then
    converges monotonically from the left.
    """
    if y <= 0.0:
        raise ValueError(f"trigamma_inverse requires y > 0, got {y}")
    x = 1.0 / y
    for _ in range(max_iter):
        f = trigamma(x) - y
        step = f / tetragamma(x)
        x_new = x - step
        if x_new <= 0.0:
            x_new = x / 2.0
        if abs(x_new - x) < tol * max(1.0, x_new):
            return x_new
        x = x_new
    return x


def _beta_cont_frac(a, b, x, max_iter=300, eps=3e-16):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    if x < 0.0 or x > 1.0:
        raise ValueError(f"reg_inc_beta requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    # closed forms; these also make I_x(1, 1) = x exact
    if b == 1.0:
        return x ** a
    if a == 1.0:
        return -math.expm1(b * math.log1p(-x))
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def student_t_two_sided(t, df):
    """Two-sided tail probability P(|T| >= |t|) for Student's t with df > 0.

    df = inf uses the normal limit. Results are clamped into (0, 1]: an
    underflow to zero returns the smallest positive subnormal instead.
    """
    if df != math.inf and df <= 0.0:
        raise ValueError(f"student_t_two_sided requires df > 0, got {df}")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return _smallest_positive()
    if math.isinf(df):
        p = math.erfc(abs(t) / math.sqrt(2.0))
    else:
        p = reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
    if p <= 0.0:
        return _smallest_positive()
    return min(p, 1.0)


def _smallest_positive():
    return math.ulp(0.0)


def log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)

"""Two-group differential-expression filtering with empirical-Bayes
moderated t-statistics.

The mRNA path applies ``log2(count + 1)`` first (a documented simplification
of a count-model test); methylation beta values go through unchanged. The
prior (d0, s0^2) is fitted by the method of moments on the log residual
variances, with a Newton inversion of the trigamma function.
"""

import math
from dataclasses import dataclass

import numpy as np

from .omics import OmicsMatrix
from .special import digamma, student_t_two_sided, trigamma, trigamma_inverse


class DegenerateVariancesError(ValueError):
    """Too few positive residual variances to fit a prior."""


@dataclass
class PerFeatureStats:
    """Per-feature two-group effect and pooled residual variance."""

    effect: np.ndarray      # mean(group 1) - mean(group 0)
    resid_var: np.ndarray   # pooled within-group variance, (n0+n1-2) denominator
    df: int                 # residual degrees of freedom n0+n1-2
    n0: int
    n1: int

    def __post_init__(self):
        self.effect = np.asarray(self.effect, dtype=np.float64)
        self.resid_var = np.asarray(self.resid_var, dtype=np.float64)
        if self.resid_var.min(initial=0.0) < 0.0:
            raise ValueError("negative residual variance")
        if self.df < 1:
            raise ValueError("residual degrees of freedom must be >= 1")


@dataclass
class EbPrior:
    """Empirical-Bayes variance prior.

    ``d0`` may be ``math.inf`` (all variances shrunk fully to ``s0_sq``) and
    may be set to 0.0 as an explicit override that disables moderation and
    recovers the ordinary pooled t-test.
    """

    d0: float
    s0_sq: float

    def __post_init__(self):
        if self.d0 < 0.0 or math.isnan(self.d0):
            raise ValueError(f"prior degrees of freedom must be >= 0, got {self.d0}")
        if not (self.s0_sq > 0.0):
            raise ValueError(f"prior variance must be > 0, got {self.s0_sq}")


@dataclass
class ModeratedTests:
    """Moderated t-statistics with two-sided p-values."""

    t: np.ndarray
    total_df: float          # d0 + df, shared by all features
    p: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.size and (self.p.min() <= 0.0 or self.p.max() > 1.0):
            raise ValueError("p-values must lie in (0, 1]")


def log2_plus_one(matrix):
    """Count transform used on the mRNA layer before testing."""
    if matrix.values.min(initial=0.0) < 0.0:
        raise ValueError("log2(count+1) transform needs nonnegative values")
    return matrix.with_values(np.log2(matrix.values + 1.0))


def group_stats(matrix, group_of):
    """Per-feature effect size and pooled variance for a two-group contrast.

    ``group_of`` maps sample ID to 0 or 1; samples absent from the map are
    ignored. Each group must contain at least 2 samples.
    """
    cols0, cols1 = [], []
    for j, sid in enumerate(matrix.sample_ids):
        g = group_of.get(sid)
        if g == 0:
            cols0.append(j)
        elif g == 1:
            cols1.append(j)
        elif g is not None:
            raise ValueError(f"group of sample {sid!r} must be 0 or 1, got {g!r}")
    n0, n1 = len(cols0), len(cols1)
    if n0 < 2 or n1 < 2:
        raise ValueError(f"each group needs >= 2 samples, got sizes ({n0}, {n1})")
    x0 = matrix.values[:, cols0]
    x1 = matrix.values[:, cols1]
    mean0 = x0.mean(axis=1)
    mean1 = x1.mean(axis=1)
    ss0 = ((x0 - mean0[:, None]) ** 2).sum(axis=1)
    ss1 = ((x1 - mean1[:, None]) ** 2).sum(axis=1)
    df = n0 + n1 - 2
    resid_var = (ss0 + ss1) / df
    # exact-zero guard: tiny negative round-off from the subtraction is clipped
    resid_var = np.maximum(resid_var, 0.0)
    return PerFeatureStats(mean1 - mean0, resid_var, df, n0, n1)


def estimate_prior(stats):
    """Method-of-moments fit of the variance prior (d0, s0^2).

    Works on e_g = log(s_g^2) - psi(d/2) + log(d/2) for features with
    positive residual variance: the trigamma equation
    psi'(d0/2) = var(e) - psi'(d/2) is inverted by Newton iteration when the
    right-hand side is positive, otherwise d0 = inf. ``var(e)`` is the sample
    (n-1) variance.
    """
    s2 = stats.resid_var[stats.resid_var > 0.0]
    if s2.size < 2:
        raise DegenerateVariancesError(
            "degenerate variances: need >= 2 features with positive residual variance")
    half_df = stats.df / 2.0
    e = np.log(s2) - digamma(half_df) + math.log(half_df)
    e_mean = float(e.mean())
    e_var = float(e.var(ddof=1))
    excess = e_var - trigamma(half_df)
    if excess <= 0.0:
        return EbPrior(math.inf, math.exp(e_mean))
    half_d0 = trigamma_inverse(excess)
    s0_sq = math.exp(e_mean + digamma(half_d0) - math.log(half_d0))
    return EbPrior(2.0 * half_d0, s0_sq)


def moderated_t(stats, prior):
    """Moderated t-statistics and two-sided p-values.

    The posterior variance shrinks each s_g^2 toward the prior:
    s~^2 = (d0*s0^2 + d*s^2) / (d0 + d), with the limits d0 = 0 (ordinary
    pooled t) and d0 = inf (all variances replaced by s0^2, normal tail).
    """
    d = float(stats.df)
    if math.isinf(prior.d0):
        s_tilde = np.full_like(stats.resid_var, prior.s0_sq)
        total_df = math.inf
    else:
        s_tilde = (prior.d0 * prior.s0_sq + d * stats.resid_var) / (prior.d0 + d)
        total_df = prior.d0 + d
    scale = 1.0 / stats.n0 + 1.0 / stats.n1
    se = np.sqrt(s_tilde * scale)

    t = np.zeros_like(stats.effect)
    p = np.ones_like(stats.effect)
    tiny = math.ulp(0.0)
    for g in range(stats.effect.size):
        if se[g] == 0.0:
            if stats.effect[g] == 0.0:
                t[g], p[g] = 0.0, 1.0
            else:
                t[g] = math.copysign(math.inf, stats.effect[g])
                p[g] = tiny
        else:
            t[g] = stats.effect[g] / se[g]
            p[g] = student_t_two_sided(t[g], total_df)
    return ModeratedTests(t, total_df, p)


def filter_by_p(tests, threshold):
    """Indices of features with p < threshold, in original feature order."""
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return np.flatnonzero(tests.p < threshold)


def select_differential(matrix, group_of, threshold, d0_override=None):
    """Full moderated-t filter: stats -> prior -> tests -> p-threshold.

    Returns ``(selected feature indices, tests, prior)``. ``d0_override``
    replaces the estimated prior degrees of freedom (0 disables moderation).
    """
    stats = group_stats(matrix, group_of)
    prior = estimate_prior(stats)
    if d0_override is not None:
        prior = EbPrior(d0_override, prior.s0_sq)
    tests = moderated_t(stats, prior)
    return filter_by_p(tests, threshold), tests, prior


def tumor_normal_groups(labels, normal_label="Normal"):
    """The standard two-group contrast: samples labeled ``normal_label`` vs the rest."""
    groups = {}
    for sid, lab in labels.entries.items():
        groups[sid] = 0 if lab.lower() == normal_label.lower() else 1
    return groups

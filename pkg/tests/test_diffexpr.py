import math

import numpy as np
import pytest

from gatomics.diffexpr import (DegenerateVariancesError, EbPrior, ModeratedTests,
                               PerFeatureStats, estimate_prior, filter_by_p,
                               group_stats, log2_plus_one, moderated_t,
                               select_differential, tumor_normal_groups)
from gatomics.omics import OmicsMatrix, SampleLabels
from gatomics.special import digamma, trigamma

from test_special import two_sided_p_by_quadrature


def matrix_from_groups(values0, values1):
    """Features x samples matrix with group-0 columns first."""
    values0 = np.atleast_2d(np.asarray(values0, dtype=float))
    values1 = np.atleast_2d(np.asarray(values1, dtype=float))
    n0, n1 = values0.shape[1], values1.shape[1]
    samples = [f"N{i}" for i in range(n0)] + [f"T{i}" for i in range(n1)]
    values = np.concatenate([values0, values1], axis=1)
    m = OmicsMatrix("test", [f"f{g}" for g in range(values.shape[0])],
                    samples, values)
    groups = {f"N{i}": 0 for i in range(n0)}
    groups.update({f"T{i}": 1 for i in range(n1)})
    return m, groups


class TestGroupStats:
    def test_textbook_pooled_variance(self):
        # group0 {0,2}, group1 {4,6}: means 1 and 5, SS 2 + 2, df 2
        m, groups = matrix_from_groups([[0.0, 2.0]], [[4.0, 6.0]])
        stats = group_stats(m, groups)
        assert stats.effect[0] == 4.0
        assert stats.resid_var[0] == 2.0
        assert stats.df == 2
        assert (stats.n0, stats.n1) == (2, 2)

    def test_identical_constant_groups(self):
        m, groups = matrix_from_groups([[3.0, 3.0, 3.0]], [[3.0, 3.0]])
        stats = group_stats(m, groups)
        assert stats.effect[0] == 0.0
        assert stats.resid_var[0] == 0.0

    def test_too_small_group_rejected(self):
        m, groups = matrix_from_groups([[1.0]], [[2.0, 3.0, 4.0]])
        with pytest.raises(ValueError, match=r"\(1, 3\)"):
            group_stats(m, groups)

    def test_samples_outside_map_ignored(self):
        m, groups = matrix_from_groups([[0.0, 2.0]], [[4.0, 6.0, 100.0]])
        del groups["T2"]
        stats = group_stats(m, groups)
        assert stats.effect[0] == 4.0


class TestEstimatePrior:
    def test_equal_variances_force_infinite_d0(self):
        # large residual df so exp(mean(e)) is close to the common value
        df = 1000
        stats = PerFeatureStats(np.zeros(5), np.full(5, 2.5), df, 501, 501)
        prior = estimate_prior(stats)
        assert math.isinf(prior.d0)
        # the normative limit form, exactly
        e = math.log(2.5) - digamma(df / 2.0) + math.log(df / 2.0)
        assert prior.s0_sq == pytest.approx(math.exp(e), rel=1e-12)
        # which approaches the common value as df grows (factor ~ e^(1/df))
        assert prior.s0_sq == pytest.approx(2.5, rel=2e-3)

    def test_monte_carlo_recovery_of_known_d0(self):
        # scaled chi-square model with known hyperparameters: marginally
        # s_g^2 = s0^2 * F(d_g, d0)
        rng = np.random.default_rng(42)
        d0_true, s0_true, d_g, n_feat = 4.0, 2.0, 4, 10_000
        num = rng.chisquare(d_g, n_feat) / d_g
        den = rng.chisquare(d0_true, n_feat) / d0_true
        s2 = s0_true * num / den
        stats = PerFeatureStats(np.zeros(n_feat), s2, d_g, 3, 3)
        prior = estimate_prior(stats)
        assert abs(prior.d0 - d0_true) / d0_true < 0.20
        assert abs(prior.s0_sq - s0_true) / s0_true < 0.20

    def test_two_feature_defining_equation_residual(self):
        # s^2 = {1, e^2}, d = 10 each: check psi'(d0/2) = var(e) - psi'(5)
        s2 = np.array([1.0, math.e ** 2])
        stats = PerFeatureStats(np.zeros(2), s2, 10, 6, 6)
        prior = estimate_prior(stats)
        assert math.isfinite(prior.d0)
        e = np.log(s2) - digamma(5.0) + math.log(5.0)
        expected = float(e.var(ddof=1)) - trigamma(5.0)
        assert abs(trigamma(prior.d0 / 2.0) - expected) < 1e-8

    def test_all_zero_variances_rejected(self):
        stats = PerFeatureStats(np.zeros(4), np.zeros(4), 4, 3, 3)
        with pytest.raises(DegenerateVariancesError, match="degenerate variances"):
            estimate_prior(stats)


class TestModeratedT:
    def test_zero_effect_gives_p_one(self):
        stats = PerFeatureStats(np.zeros(3), np.ones(3), 4, 3, 3)
        tests = moderated_t(stats, EbPrior(4.0, 1.0))
        assert np.array_equal(tests.t, np.zeros(3))
        assert np.array_equal(tests.p, np.ones(3))

    def test_d0_zero_recovers_ordinary_pooled_t(self):
        # the worked example: effect 4, s^2 = 2, n0 = n1 = 2
        stats = PerFeatureStats(np.array([4.0]), np.array([2.0]), 2, 2, 2)
        tests = moderated_t(stats, EbPrior(0.0, 1.0))
        assert tests.t[0] == pytest.approx(4.0 / math.sqrt(2.0), abs=1e-12)
        assert tests.total_df == 2

    def test_d0_zero_matches_hand_t_on_random_features(self):
        rng = np.random.default_rng(11)
        n0, n1, n_feat = 5, 7, 1000
        x0 = rng.normal(size=(n_feat, n0))
        x1 = rng.normal(size=(n_feat, n1))
        m = OmicsMatrix("r", [f"f{g}" for g in range(n_feat)],
                        [f"N{i}" for i in range(n0)] + [f"T{i}" for i in range(n1)],
                        np.concatenate([x0, x1], axis=1))
        groups = {f"N{i}": 0 for i in range(n0)}
        groups.update({f"T{i}": 1 for i in range(n1)})
        stats = group_stats(m, groups)
        tests = moderated_t(stats, EbPrior(0.0, 123.0))
        # independent hand computation of the pooled two-sample t
        df = n0 + n1 - 2
        sp = ((x0 - x0.mean(1, keepdims=True)) ** 2).sum(1)
        sp += ((x1 - x1.mean(1, keepdims=True)) ** 2).sum(1)
        sp /= df
        t_hand = (x1.mean(1) - x0.mean(1)) / np.sqrt(sp * (1 / n0 + 1 / n1))
        assert np.max(np.abs(tests.t - t_hand)) < 1e-10

    def test_p_against_quadrature_at_probe_point(self):
        # construct t = 2 with 4 total df: d0 = 0, d = 4, n0 = n1 = 3
        s2, scale = 3.0, 2.0 / 3.0
        effect = 2.0 * math.sqrt(s2 * scale)
        stats = PerFeatureStats(np.array([effect]), np.array([s2]), 4, 3, 3)
        tests = moderated_t(stats, EbPrior(0.0, 1.0))
        assert tests.t[0] == pytest.approx(2.0, abs=1e-12)
        assert tests.p[0] == pytest.approx(0.1161, abs=5e-5)
        assert tests.p[0] == pytest.approx(two_sided_p_by_quadrature(2.0, 4.0),
                                           abs=1e-8)

    def test_shrinkage_lies_between_sample_and_prior_variance(self):
        rng = np.random.default_rng(5)
        s2 = rng.uniform(0.1, 5.0, size=200)
        stats = PerFeatureStats(np.zeros(200), s2, 6, 4, 4)
        prior = EbPrior(3.0, 1.2)
        s_tilde = (prior.d0 * prior.s0_sq + stats.df * s2) / (prior.d0 + stats.df)
        lo = np.minimum(s2, prior.s0_sq)
        hi = np.maximum(s2, prior.s0_sq)
        assert np.all(s_tilde >= lo - 1e-15)
        assert np.all(s_tilde <= hi + 1e-15)

    def test_infinite_d0_replaces_every_variance(self):
        rng = np.random.default_rng(6)
        stats = PerFeatureStats(rng.normal(size=50),
                                rng.uniform(0.1, 2.0, size=50), 8, 5, 5)
        prior = EbPrior(math.inf, 0.7)
        tests = moderated_t(stats, prior)
        expected = stats.effect / math.sqrt(0.7 * (1 / 5 + 1 / 5))
        assert np.max(np.abs(tests.t - expected)) < 1e-12
        assert math.isinf(tests.total_df)

    def test_larger_abs_t_never_larger_p(self):
        rng = np.random.default_rng(7)
        stats = PerFeatureStats(rng.normal(scale=3.0, size=300),
                                np.ones(300), 10, 6, 6)
        tests = moderated_t(stats, EbPrior(5.0, 1.0))
        order = np.argsort(np.abs(tests.t))
        sorted_p = tests.p[order]
        assert np.all(np.diff(sorted_p) <= 1e-15)

    def test_zero_variance_edge_cases(self):
        stats = PerFeatureStats(np.array([0.0, 2.0]), np.zeros(2), 2, 2, 2)
        tests = moderated_t(stats, EbPrior(0.0, 1.0))
        assert tests.t[0] == 0.0 and tests.p[0] == 1.0
        assert math.isinf(tests.t[1]) and 0.0 < tests.p[1] < 1e-300


class TestFilterByP:
    def test_threshold_examples(self):
        tests = ModeratedTests(np.zeros(3), 4.0, np.array([0.2, 0.0005, 0.04]))
        assert filter_by_p(tests, 0.001).tolist() == [1]
        assert filter_by_p(tests, 0.05).tolist() == [1, 2]

    def test_all_ones_empty(self):
        tests = ModeratedTests(np.zeros(4), 4.0, np.ones(4))
        assert filter_by_p(tests, 0.05).size == 0

    def test_threshold_domain(self):
        tests = ModeratedTests(np.zeros(1), 4.0, np.ones(1))
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                filter_by_p(tests, bad)

    def test_selection_invariant_under_feature_permutation(self):
        rng = np.random.default_rng(8)
        p = rng.uniform(size=100)
        tests = ModeratedTests(np.zeros(100), 4.0, p)
        base = set(filter_by_p(tests, 0.3).tolist())
        perm = rng.permutation(100)
        shuffled = ModeratedTests(np.zeros(100), 4.0, p[perm])
        mapped = {int(perm[i]) for i in filter_by_p(shuffled, 0.3)}
        assert mapped == base


class TestPipelineHelpers:
    def test_log2_plus_one(self):
        m = OmicsMatrix("mrna", ["f0"], ["S0", "S1"], np.array([[0.0, 7.0]]))
        out = log2_plus_one(m)
        assert out.values.tolist() == [[0.0, 3.0]]
        with pytest.raises(ValueError):
            log2_plus_one(m.with_values(np.array([[-1.0, 0.0]])))

    def test_tumor_normal_groups(self):
        labels = SampleLabels({"a": "Normal", "b": "BRCA", "c": "normal"})
        groups = tumor_normal_groups(labels)
        assert groups == {"a": 0, "b": 1, "c": 0}

    def test_select_differential_finds_planted_features(self):
        rng = np.random.default_rng(9)
        n0 = n1 = 20
        n_feat = 60
        x = rng.normal(size=(n_feat, n0 + n1))
        planted = [3, 17, 44]
        x[planted, n0:] += 4.0
        m = OmicsMatrix("meth", [f"f{g}" for g in range(n_feat)],
                        [f"N{i}" for i in range(n0)] + [f"T{i}" for i in range(n1)],
                        x)
        groups = {f"N{i}": 0 for i in range(n0)}
        groups.update({f"T{i}": 1 for i in range(n1)})
        idx, tests, prior = select_differential(m, groups, 1e-6)
        assert set(planted) <= set(idx.tolist())
        assert prior.d0 > 0

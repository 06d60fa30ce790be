import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from bayes_rvm.errors import ConfigurationError, InputError, NumericalError
from bayes_rvm.model import HierHyper, log_conditional_rho
from bayes_rvm.samplers import (Hull, LogDensity, RngStream, ars_sample, gamma_sample,
                                mvn_sample, normal_sample, ratio_of_uniforms_sample,
                                rou_bounds)

N = 10_000

STD_NORMAL = LogDensity(lambda x: -0.5 * x * x, lambda x: -x)
EXPONENTIAL = LogDensity(lambda x: -x, lambda x: -1.0, support=(0.0, math.inf))


def draws(sampler, target, n, seed=0, **kw):
    stream = RngStream(seed)
    return np.array([sampler(target, rng=stream, **kw) for _ in range(n)])


def bimodal():
    def log_f(x):
        return np.logaddexp(-0.5 * (x + 3) ** 2, -0.5 * (x - 3) ** 2)
    return LogDensity(log_f)


class TestRngStream:
    def test_same_key_same_sequence(self):
        a = RngStream(5, 2).generator.random(8)
        b = RngStream(5, 2).generator.random(8)
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams_uncorrelated(self):
        a = RngStream(5, 0).generator.random(20_000)
        b = RngStream(5, 1).generator.random(20_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.03

    def test_children_are_deterministic_and_distinct(self):
        root = RngStream(9)
        assert root.child(3).generator.random() == RngStream(9).child(3).generator.random()
        assert root.child(3).generator.random() != root.child(4).generator.random()

    def test_rejects_negative_seed(self):
        with pytest.raises(InputError):
            RngStream(-1)


class TestArs:
    def test_standard_normal_ks(self):
        x = draws(ars_sample, STD_NORMAL, N, init_abscissae=[-1.0, 1.0])
        assert stats.kstest(x, "norm").statistic < 0.02

    def test_exponential_mean(self):
        x = draws(ars_sample, EXPONENTIAL, N, init_abscissae=[0.5, 2.0])
        assert abs(x.mean() - 1.0) < 3.0 / math.sqrt(N)
        assert np.all(x > 0)

    def test_bimodal_detected(self):
        with pytest.raises(NumericalError, match="not concave"):
            for _ in range(50):
                ars_sample(bimodal(), [-3.0, -0.5, 0.5, 3.0], RngStream(1))

    def test_unbracketed_mode(self):
        with pytest.raises(ConfigurationError):
            ars_sample(STD_NORMAL, [1.0, 2.0], RngStream(0))

    def test_growth_finds_bracket(self):
        shifted = LogDensity(lambda x: -0.5 * (x - 40.0) ** 2, lambda x: -(x - 40.0))
        x = draws(ars_sample, shifted, 2000, init_abscissae=[-1.0, 1.0], grow=12)
        assert abs(x.mean() - 40.0) < 4.0 / math.sqrt(2000)

    def test_numeric_derivative_fallback(self):
        target = LogDensity(lambda x: -0.5 * x * x)
        x = draws(ars_sample, target, 3000, init_abscissae=[-1.0, 1.0])
        assert stats.kstest(x, "norm").statistic < 0.04

    def test_deterministic(self):
        a = draws(ars_sample, STD_NORMAL, 50, seed=3, init_abscissae=[-1.0, 1.0])
        b = draws(ars_sample, STD_NORMAL, 50, seed=3, init_abscissae=[-1.0, 1.0])
        np.testing.assert_array_equal(a, b)

    @given(st.lists(st.floats(-6, 6), min_size=2, max_size=8, unique=True),
           st.floats(0.2, 4.0), st.floats(-3, 3))
    def test_hull_ordering(self, xs, scale, m):
        # gaussian with random location and scale
        target = LogDensity(lambda x: -0.5 * ((x - m) / scale) ** 2,
                            lambda x: -(x - m) / scale ** 2)
        xs = sorted(xs)
        if min(np.diff(xs)) < 1e-3:
            return
        h = Hull(target, xs)
        probes = np.random.default_rng(0).uniform(xs[0], xs[-1], 100)
        for p in probes:
            f = target.log_f(p)
            assert h.lower(p) <= f + 1e-8
            assert h.upper(p) >= f - 1e-8

    def test_upper_hull_dominates_at_accepted_points(self):
        xs = [-2.0, -0.3, 0.8, 2.5]
        h = Hull(STD_NORMAL, xs)
        x = draws(ars_sample, STD_NORMAL, 500, init_abscissae=xs)
        assert all(h.upper(v) >= STD_NORMAL.log_f(v) - 1e-12 for v in x)

    def test_hull_rejects_nonconcave(self):
        with pytest.raises(NumericalError):
            Hull(bimodal(), [-3.0, -0.5, 0.5, 3.0])


def eq_rho_target():
    eta = np.array([0.3, -1.2, 2.5, 0.9, -0.4, 1.7])
    return log_conditional_rho(eta, HierHyper(mu=0.2, tau2=1.5), n=5)


class TestRatioOfUniforms:
    def test_uniform_ks(self):
        target = LogDensity(lambda x: 0.0, support=(0.0, 1.0))
        x = draws(ratio_of_uniforms_sample, target, N)
        assert stats.kstest(x, "uniform").statistic < 0.02

    def test_beta22_mean(self):
        target = LogDensity(lambda x: math.log(x) + math.log1p(-x), support=(0.0, 1.0))
        x = draws(ratio_of_uniforms_sample, target, N)
        assert abs(x.mean() - 0.5) < 3 * math.sqrt(0.05 / N)

    def test_rho_conditional_histogram(self):
        target = eq_rho_target()
        x = draws(ratio_of_uniforms_sample, target, 50_000, seed=11)
        edges = np.linspace(0.0, 1.0, 513)
        shift = max(target.log_f(v) for v in np.linspace(1e-6, 1 - 1e-6, 20001))
        mass = np.array([integrate.quad(lambda r: math.exp(target.log_f(r) - shift), a, b)[0]
                         for a, b in zip(edges[:-1], edges[1:])])
        mass /= mass.sum()
        hist = np.histogram(x, edges)[0] / x.size
        assert 0.5 * np.abs(hist - mass).sum() < 0.05

    def test_draws_inside_support(self):
        x = draws(ratio_of_uniforms_sample, eq_rho_target(), 2000)
        assert np.all((x > 0) & (x < 1))

    def test_bounds_cover_grid(self):
        target = eq_rho_target()
        shift, mode, a, bm, bp = rou_bounds(target)
        grid = np.linspace(1e-4, 1 - 1e-4, 10_001)
        root = np.exp(0.5 * (np.array([target.log_f(g) for g in grid]) - shift))
        offset = (grid - mode) * root
        assert root.max() <= a and offset.max() <= bp and offset.min() >= bm

    def test_narrow_peak_near_boundary(self):
        # eta nearly identical with tiny tau2: the rho conditional is a spike
        # about 1e-6 wide just below 1
        from bayes_rvm.model import rho_conditional_kernel
        params = (33.0, 1.263863692578701e-07, 0.0003665568068802226, 0.0005946411290555394)
        target = LogDensity(lambda r: rho_conditional_kernel(r, params), support=(0.0, 1.0),
                            jit=(rho_conditional_kernel, params))
        x = draws(ratio_of_uniforms_sample, target, 4000, seed=2)
        t = 1.0 - x
        # oracle: quadrature of the density in t = 1 - rho on a log scale
        ts = np.geomspace(1e-12, 1.0, 200_001)[:-1]
        logp = np.array([rho_conditional_kernel(1.0 - v, params) for v in ts]) + np.log(ts)
        p = np.exp(logp - logp.max())
        cdf = np.cumsum(p) / p.sum()
        median_t = ts[np.searchsorted(cdf, 0.5)]
        assert np.median(t) == pytest.approx(median_t, rel=0.05)
        assert np.all((x > 0) & (x < 1))

    def test_nonfinite_grid_value(self):
        target = LogDensity(lambda x: math.inf if x > 0.5 else 0.0, support=(0.0, 1.0))
        with pytest.raises(NumericalError):
            ratio_of_uniforms_sample(target, RngStream(0))

    def test_unbounded_support(self):
        with pytest.raises(InputError):
            ratio_of_uniforms_sample(STD_NORMAL, RngStream(0))

    def test_deterministic(self):
        a = draws(ratio_of_uniforms_sample, eq_rho_target(), 20, seed=4)
        b = draws(ratio_of_uniforms_sample, eq_rho_target(), 20, seed=4)
        np.testing.assert_array_equal(a, b)


def se_of_mean(sd, n):
    return sd / math.sqrt(n)


class TestStandardDraws:
    def test_gamma_exponential_mean(self):
        x = gamma_sample(1.0, 1.0, RngStream(0), size=N)
        assert abs(x.mean() - 1.0) < 3 * se_of_mean(1.0, N)

    def test_gamma_small_rate(self):
        shape, rate = 1.5, 1 / 999
        x = gamma_sample(shape, rate, RngStream(0), size=N)
        assert abs(x.mean() - 1498.5) < 3 * se_of_mean(math.sqrt(shape) / rate, N)

    @pytest.mark.parametrize("shape,rate", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_gamma_invalid(self, shape, rate):
        with pytest.raises(InputError):
            gamma_sample(shape, rate, RngStream(0))

    def test_normal_ks(self):
        assert stats.kstest(normal_sample(0.0, 1.0, RngStream(0), size=N), "norm").statistic < 0.02

    def test_normal_variance(self):
        x = normal_sample(5.0, 4.0, RngStream(2), size=N)
        # var of the sample variance for a normal is 2 sigma^4 / (n - 1)
        assert abs(x.var(ddof=1) - 4.0) < 3 * math.sqrt(2 * 16 / (N - 1))

    def test_normal_zero_variance(self):
        with pytest.raises(InputError):
            normal_sample(0.0, 0.0, RngStream(0))

    def test_mvn_identity(self):
        x = mvn_sample(np.zeros(2), np.eye(2), RngStream(0), size=N)
        assert x.shape == (N, 2)
        for j in range(2):
            assert stats.kstest(x[:, j], "norm").statistic < 0.02

    def test_mvn_reference_covariance(self):
        S = np.array([[10.0, 3.0], [3.0, 8.0]])
        x = mvn_sample(np.array([7.0, 8.0]), S, RngStream(1), size=N)
        assert np.linalg.norm(np.cov(x.T) - S) / np.linalg.norm(S) < 0.10

    def test_mvn_asymmetric(self):
        with pytest.raises(InputError):
            mvn_sample(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]), RngStream(0))

    def test_mvn_indefinite(self):
        with pytest.raises(InputError):
            mvn_sample(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), RngStream(0))

    def test_mvn_single_draw_shape_and_repeatability(self):
        a = mvn_sample(np.ones(3), np.eye(3), RngStream(8))
        b = mvn_sample(np.ones(3), np.eye(3), RngStream(8))
        assert a.shape == (3,)
        np.testing.assert_array_equal(a, b)

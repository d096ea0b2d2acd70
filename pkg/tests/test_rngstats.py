import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from unfold.rngstats import (FactorizationError, GaussianConditional, InvalidIntervalError,
                             InvalidParameterError, RngStream, bvn_response_cdf,
                             bvn_response_sf, log_trunc_normal_pdf, sample_mvn,
                             sample_trunc_normal, std_normal_cdf, std_trunc_normal)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def bvn_oracle(a, b):
    """P(X < a, Y < b) for N(0, [[2,1],[1,2]]) by 1-D adaptive quadrature.

    X ~ N(0, 2) and Y | X = x ~ N(x / 2, 3 / 2).
    """
    f = lambda x: stats.norm.pdf(x, scale=math.sqrt(2)) * stats.norm.cdf(b, loc=x / 2, scale=math.sqrt(1.5))
    val, _ = integrate.quad(f, -np.inf, a, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


# ---------------------------------------------------------------------------
# RngStream
# ---------------------------------------------------------------------------

def test_same_seed_and_stream_reproduce_bytes():
    a = RngStream(42, 3).normal(1000)
    b = RngStream(42, 3).normal(1000)
    assert a.tobytes() == b.tobytes()


def test_distinct_streams_differ_and_are_uncorrelated():
    a = RngStream(42, 0).normal(100_000)
    b = RngStream(42, 1).normal(100_000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


# ---------------------------------------------------------------------------
# normal and bivariate CDFs
# ---------------------------------------------------------------------------

def test_std_normal_cdf_examples():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(-np.inf) == 0.0
    assert std_normal_cdf(np.inf) == 1.0
    oracle = float(mpmath.ncdf(1.96))
    assert abs(std_normal_cdf(1.96) - oracle) <= 1e-12
    assert abs(std_normal_cdf(1.96) - 0.9750021) < 5e-8


@pytest.mark.parametrize("x", [-8.0, -3.3, -0.7, 0.2, 2.5, 6.0])
def test_std_normal_cdf_against_mpmath(x):
    assert abs(std_normal_cdf(x) - float(mpmath.ncdf(x))) <= 1e-12


def test_bvn_origin_is_one_third():
    closed = 0.25 + math.asin(0.5) / (2 * math.pi)
    assert abs(bvn_response_cdf(0.0, 0.0) - closed) <= 1e-10
    assert abs(bvn_response_cdf(0.0, 0.0) - bvn_oracle(0.0, 0.0)) <= 1e-10


def test_bvn_limits():
    assert bvn_response_cdf(np.inf, np.inf) == 1.0
    for a in (-5.0, 0.0, 3.0, np.inf, -np.inf):
        assert bvn_response_cdf(a, -np.inf) == 0.0
        assert bvn_response_cdf(-np.inf, a) == 0.0


@pytest.mark.parametrize("a,b", [(-3.0, 2.0), (1.5, 1.5), (0.3, -4.2), (6.0, 5.0),
                                 (-7.0, -6.5), (10.0, -1.0), (2.2, 0.0)])
def test_bvn_against_quadrature(a, b):
    assert abs(bvn_response_cdf(a, b) - bvn_oracle(a, b)) <= 1e-10


def test_bvn_against_scipy_multivariate_normal():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, size=(30, 2))
    ref = stats.multivariate_normal(mean=[0, 0], cov=[[2, 1], [1, 2]])
    for a, b in pts:
        assert abs(bvn_response_cdf(a, b) - ref.cdf([a, b])) <= 1e-7  # scipy's own tolerance


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_bvn_exchangeable(a, b):
    assert bvn_response_cdf(a, b) == pytest.approx(bvn_response_cdf(b, a), abs=1e-15)


@given(st.floats(-12, 12))
def test_bvn_marginal(a):
    assert abs(bvn_response_cdf(a, np.inf) - std_normal_cdf(a / math.sqrt(2))) <= 1e-9
    assert abs(bvn_response_cdf(a, 40.0) - std_normal_cdf(a / math.sqrt(2))) <= 1e-9


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 3))
def test_bvn_monotone_and_bounded(a, b, h):
    p = bvn_response_cdf(a, b)
    assert 0.0 <= p <= 1.0
    assert bvn_response_cdf(a + h, b) >= p - 1e-15
    assert bvn_response_cdf(a, b + h) >= p - 1e-15


def test_bvn_survival_has_no_cancellation():
    a, b = 9.0, 9.5
    q = bvn_response_sf(a, b)
    # both tails: P(X > a) + P(Y > b) - P(both) with X, Y ~ N(0, 2)
    approx = stats.norm.sf(a / math.sqrt(2)) + stats.norm.sf(b / math.sqrt(2))
    assert q > 0 and abs(q / approx - 1) < 1e-3
    assert abs(bvn_response_cdf(1.0, -0.5) + bvn_response_sf(1.0, -0.5) - 1.0) < 1e-15


def test_bvn_vectorised_shapes():
    a = np.linspace(-2, 2, 12).reshape(3, 4)
    out = bvn_response_cdf(a, a.T[:3, :1])
    assert out.shape == (3, 4)
    assert isinstance(bvn_response_cdf(0.1, 0.2), float)


# ---------------------------------------------------------------------------
# truncated normal
# ---------------------------------------------------------------------------

def test_trunc_normal_untruncated_mean():
    x = sample_trunc_normal(np.zeros(10 ** 6), 1.0, -np.inf, np.inf, RngStream(1))
    assert abs(x.mean()) < 0.005


def test_trunc_normal_half_line_mean():
    x = sample_trunc_normal(np.zeros(10 ** 6), 1.0, 0.0, np.inf, RngStream(2))
    assert np.all(x > 0)
    assert abs(x.mean() - SQRT_2_OVER_PI) < 0.005


def test_trunc_normal_reflected_half_line_mean():
    x = sample_trunc_normal(np.full(10 ** 6, 5.0), 1.0, -np.inf, 5.0, RngStream(3))
    assert np.all(x < 5.0)
    assert abs(x.mean() - (5.0 - SQRT_2_OVER_PI)) < 0.005


def test_trunc_normal_scalar_returns_float():
    x = sample_trunc_normal(0.0, 2.0, 1.0, 1.5, RngStream(4))
    assert isinstance(x, float) and 1.0 < x < 1.5


def test_trunc_normal_errors():
    with pytest.raises(InvalidIntervalError):
        sample_trunc_normal(0.0, 1.0, 1.0, 1.0, RngStream(0))
    with pytest.raises(InvalidIntervalError):
        sample_trunc_normal(0.0, 1.0, 2.0, 1.0, RngStream(0))
    with pytest.raises(InvalidParameterError):
        sample_trunc_normal(np.nan, 1.0, 0.0, 1.0, RngStream(0))
    with pytest.raises(InvalidParameterError):
        sample_trunc_normal(0.0, np.inf, 0.0, 1.0, RngStream(0))
    with pytest.raises(InvalidParameterError):
        sample_trunc_normal(0.0, 0.0, 0.0, 1.0, RngStream(0))


def test_trunc_normal_matches_rejection_sampling():
    """20 random configurations, KS p-value above 0.001 against naive rejection."""
    cfg_rng = np.random.default_rng(11)
    rng = RngStream(12)
    ref = np.random.default_rng(13)
    for _ in range(20):
        mean = cfg_rng.uniform(-3, 3)
        sd = cfg_rng.uniform(0.3, 3)
        kind = cfg_rng.integers(3)
        lo = mean + sd * cfg_rng.uniform(-2.0, 0.5)
        hi = lo + sd * cfg_rng.uniform(0.5, 3.0)
        if kind == 1:
            lo = -np.inf
        elif kind == 2:
            hi = np.inf
        x = sample_trunc_normal(np.full(10 ** 5, mean), sd, lo, hi, rng)
        assert np.all((x > lo) & (x < hi))
        pool = []
        while sum(p.size for p in pool) < 10 ** 5:
            y = ref.normal(mean, sd, 10 ** 6)
            pool.append(y[(y > lo) & (y < hi)])
        y = np.concatenate(pool)[: 10 ** 5]
        assert stats.ks_2samp(x, y).pvalue > 0.001, (mean, sd, lo, hi)


@pytest.mark.parametrize("lo,hi", [(8.0, np.inf), (12.0, 12.5), (-np.inf, -9.0), (6.0, 6.001),
                                   (30.0, np.inf)])
def test_trunc_normal_far_tails_against_scipy(lo, hi):
    x = std_trunc_normal(np.full(20_000, lo), np.full(20_000, hi), RngStream(5))
    assert np.all((x > lo) & (x < hi))
    dist = stats.truncnorm(lo, hi)
    assert stats.kstest(x, dist.cdf).pvalue > 0.001


def test_trunc_normal_narrow_interval_away_from_zero():
    x = std_trunc_normal(np.full(10_000, -0.5), np.full(10_000, -0.5 + 1e-7), RngStream(6))
    assert np.all((x > -0.5) & (x < -0.5 + 1e-7))


# ---------------------------------------------------------------------------
# Gaussian conditionals
# ---------------------------------------------------------------------------

def _draws(cond, n, seed):
    rng = RngStream(seed)
    chol = cond.cholesky()
    # same computation as sample_mvn, batched for speed
    z = rng.normal((n, cond.mean.size))
    return cond.mean + z @ chol.T


def test_sample_mvn_identity():
    cond = GaussianConditional([0.0, 0.0], np.eye(2))
    x = _draws(cond, 10 ** 6, 1)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.01)
    assert sample_mvn(cond, RngStream(1)).shape == (2,)


def test_sample_mvn_univariate():
    cond = GaussianConditional([3.0], [[4.0]])
    x = np.array([sample_mvn(cond, RngStream(7, i))[0] for i in range(2000)])
    assert abs(x.mean() - 3) < 4 * 2 / math.sqrt(2000)
    x = _draws(cond, 10 ** 6, 2)
    assert abs(x.mean() - 3) < 0.01


def test_sample_mvn_correlation_half():
    cond = GaussianConditional([0.0, 0.0], [[2.0, 1.0], [1.0, 2.0]])
    x = _draws(cond, 10 ** 6, 3)
    assert abs(np.corrcoef(x.T)[0, 1] - 0.5) < 0.005


def test_sample_mvn_not_positive_definite():
    with pytest.raises(FactorizationError):
        sample_mvn(GaussianConditional([0, 0], [[1.0, 2.0], [2.0, 1.0]]), RngStream(0))
    with pytest.raises(FactorizationError):
        GaussianConditional([0, 0], [[1.0, 0.5], [0.0, 1.0]]).cholesky()
    with pytest.raises(InvalidParameterError):
        GaussianConditional([0, 0, 0], np.eye(2))


# ---------------------------------------------------------------------------
# truncated-normal log density
# ---------------------------------------------------------------------------

def test_log_trunc_pdf_support():
    assert log_trunc_normal_pdf(1.2, 0.9, 0.04, 0.0, 1.0) == -np.inf
    assert log_trunc_normal_pdf(-0.1, 0.9, 0.04, 0.0, 1.0) == -np.inf
    with pytest.raises(InvalidIntervalError):
        log_trunc_normal_pdf(0.5, 0.9, 0.04, 1.0, 0.0)


@pytest.mark.parametrize("mean,sd", [(0.9, 0.04), (0.8, 0.1), (0.5, 0.3), (-3.0, 0.5)])
def test_log_trunc_pdf_normalises(mean, sd):
    f = lambda x: math.exp(log_trunc_normal_pdf(x, mean, sd, 0.0, 1.0))
    pts = [min(max(mean, 0.0), 1.0)]
    val, _ = integrate.quad(f, 0.0, 1.0, points=pts, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert abs(val - 1.0) < 1e-8


def test_log_trunc_pdf_matches_scipy():
    x = np.linspace(0.01, 0.99, 7)
    ref = stats.truncnorm((0 - 0.8) / 0.1, (1 - 0.8) / 0.1, loc=0.8, scale=0.1).logpdf(x)
    assert np.allclose(log_trunc_normal_pdf(x, 0.8, 0.1, 0.0, 1.0), ref, rtol=0, atol=1e-10)


def test_prior_mass_below_085():
    f = lambda x: math.exp(log_trunc_normal_pdf(x, 0.9, 0.04, 0.0, 1.0))
    p, _ = integrate.quad(f, 0.0, 0.85, epsabs=1e-13, limit=200)
    closed = stats.norm.cdf(-1.25) / (stats.norm.cdf(2.5) - stats.norm.cdf(-22.5))
    assert abs(p - closed) < 1e-9
    assert abs(p - 0.106) < 0.001

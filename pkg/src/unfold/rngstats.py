"""Seeded random streams and the Gaussian primitives used by the samplers.

Everything that touches randomness takes an :class:`RngStream`. Streams are
backed by the counter-based Philox generator keyed through a
``SeedSequence`` spawn key, so ``(seed, stream_id)`` pairs give disjoint,
reproducible sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

SQRT2 = math.sqrt(2.0)

# Below this mass the inverse-CDF draw is replaced by rejection sampling.
INVERSE_CDF_MIN_MASS = 1e-6


class InvalidIntervalError(ValueError):
    pass


class InvalidParameterError(ValueError):
    pass


class FactorizationError(np.linalg.LinAlgError):
    pass


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    # thin passthroughs so call sites read naturally
    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, size=None):
        return self.gen.random(size)

    def exponential(self, size=None):
        return self.gen.standard_exponential(size)


@dataclass(frozen=True)
class GaussianConditional:
    """Mean vector and covariance of a Gaussian full conditional."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidParameterError(
                f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def cholesky(self) -> np.ndarray:
        if not np.allclose(self.covariance, self.covariance.T, rtol=0, atol=1e-12):
            raise FactorizationError("covariance is not symmetric")
        try:
            return np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# normal CDF and the bivariate response CDF
# ---------------------------------------------------------------------------

def std_normal_cdf(x):
    """Standard normal CDF, accurate to double precision."""
    return ndtr(x)


# Gauss-Legendre rule for the Plackett/Genz integral over the correlation.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_RHO = 0.5
_ASR = math.asin(_RHO)
_SN = np.sin(_ASR * (_GL_NODES + 1.0) / 2.0)
_GL_COEF = _GL_WEIGHTS * _ASR / (4.0 * math.pi)


def _upper_orthant(h, k):
    """P(X > h, Y > k) for standard bivariate normal with correlation 1/2.

    h and k must be finite arrays of equal shape.
    """
    hk = (h * k)[..., None]
    hs = ((h * h + k * k) / 2.0)[..., None]
    terms = np.exp((_SN * hk - hs) / (1.0 - _SN * _SN))
    return terms @ _GL_COEF + ndtr(-h) * ndtr(-k)


def _bvn_parts(a, b):
    """Return (P(X<a, Y<b), P(not both)) for N(0, [[2,1],[1,2]])."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    h = a / SQRT2
    k = b / SQRT2
    p = np.empty(a.shape)
    q = np.empty(a.shape)
    fin = np.isfinite(h) & np.isfinite(k)
    if fin.all():
        hf, kf = h, k
    else:
        hf, kf = h[fin], k[fin]
    lower = _upper_orthant(-hf, -kf)
    both_above = _upper_orthant(hf, kf)
    comp = ndtr(-hf) + ndtr(-kf) - both_above
    if fin.all():
        return lower, comp
    p[fin] = lower
    q[fin] = comp
    inf = ~fin
    hi, ki = h[inf], k[inf]
    # at least one argument infinite: the orthant collapses to a marginal
    pi = np.where(hi == np.inf, ndtr(ki), np.where(ki == np.inf, ndtr(hi), 0.0))
    pi = np.where((hi == -np.inf) | (ki == -np.inf), 0.0, pi)
    qi = np.where(hi == np.inf, ndtr(-ki), np.where(ki == np.inf, ndtr(-hi), 1.0))
    qi = np.where((hi == -np.inf) | (ki == -np.inf), 1.0, qi)
    p[inf] = pi
    q[inf] = qi
    return p, q


def bvn_response_cdf(a, b):
    """CDF at ``(a, b)`` of the bivariate normal N(0, [[2, 1], [1, 2]]).

    Evaluated by reducing to unit variances with correlation 1/2 and
    integrating the orthant derivative in the correlation (Genz 2004)
    with a 20-point Gauss-Legendre rule. Accepts scalars or arrays.
    """
    p, _ = _bvn_parts(a, b)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def bvn_response_sf(a, b):
    """``1 - bvn_response_cdf(a, b)`` without cancellation near 1."""
    _, q = _bvn_parts(a, b)
    q = np.clip(q, 0.0, 1.0)
    return float(q) if q.ndim == 0 else q


# ---------------------------------------------------------------------------
# truncated normal draws
# ---------------------------------------------------------------------------

def _check_interval(lower, upper):
    if np.any(~(lower < upper)):
        raise InvalidIntervalError("truncation interval must satisfy lower < upper")


def std_trunc_normal(a, b, rng: RngStream):
    """Vectorised draw from N(0, 1) restricted to (a, b).

    Uses the inverse CDF on whichever side of zero keeps the tail
    probabilities representable, and rejection samplers when the interval
    carries less than ``INVERSE_CDF_MIN_MASS``.
    """
    # reflect so that a + b >= 0: the interval then sits mostly above zero
    with np.errstate(invalid="ignore"):
        # (-inf) + inf is nan, which compares False: no reflection needed
        flip = (a + b) < 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    # survival-function form: P(X > lo) and P(X > hi) are accurate in the upper tail
    s_lo = ndtr(-lo)
    s_hi = ndtr(-hi)
    mass = s_lo - s_hi
    out = np.empty(lo.shape)
    easy = mass >= INVERSE_CDF_MIN_MASS
    if easy.any():
        u = rng.uniform(int(easy.sum()))
        s = s_hi[easy] + u * mass[easy]
        out[easy] = -ndtri(s)
    hard = ~easy
    if hard.any():
        out[hard] = _tail_rejection(lo[hard], hi[hard], rng)
    x = np.where(flip, -out, out)
    # guard against the draw landing on an endpoint through rounding
    x = np.minimum(np.maximum(x, np.nextafter(a, np.inf)), np.nextafter(b, -np.inf))
    return x


def _tail_rejection(lo, hi, rng: RngStream):
    """Exact sampler for N(0,1) on (lo, hi) with lo >= 0 or a tiny interval.

    Exponential proposals (Robert 1995) for wide intervals and uniform
    proposals for narrow ones.
    """
    out = np.empty(lo.shape)
    pending = np.arange(lo.size)
    while pending.size:
        l = lo[pending]
        h = hi[pending]
        narrow = np.isfinite(h) & ((h - l) * np.maximum(l, 0.0) < 1.0) | (l < 0)
        n = pending.size
        x = np.empty(n)
        accept = np.empty(n, dtype=bool)
        # uniform proposal; the density ratio is maximised at the point closest to zero
        if narrow.any():
            ln, hn = l[narrow], h[narrow]
            xn = ln + (hn - ln) * rng.uniform(int(narrow.sum()))
            mode = np.clip(0.0, ln, hn)
            ratio = np.exp((mode * mode - xn * xn) / 2.0)
            accept[narrow] = rng.uniform(int(narrow.sum())) <= ratio
            x[narrow] = xn
        wide = ~narrow
        if wide.any():
            lw, hw = l[wide], h[wide]
            lam = (lw + np.sqrt(lw * lw + 4.0)) / 2.0
            xw = lw + rng.exponential(int(wide.sum())) / lam
            ratio = np.exp(-((xw - lam) ** 2) / 2.0)
            accept[wide] = (rng.uniform(int(wide.sum())) <= ratio) & (xw < hw)
            x[wide] = xw
        out[pending[accept]] = x[accept]
        pending = pending[~accept]
    return out


def sample_trunc_normal(mean, sd, lower, upper, rng: RngStream):
    """Draw from N(mean, sd^2) restricted to the open interval (lower, upper).

    All arguments broadcast; a scalar call returns a float.
    """
    mean, sd, lower, upper = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(sd, dtype=float),
        np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(sd)) and np.all(sd > 0)):
        raise InvalidParameterError("mean must be finite and sd finite and positive")
    _check_interval(lower, upper)
    scalar = mean.ndim == 0
    a = np.atleast_1d((lower - mean) / sd)
    b = np.atleast_1d((upper - mean) / sd)
    x = np.atleast_1d(mean) + np.atleast_1d(sd) * std_trunc_normal(a, b, rng)
    # the affine map can round onto a finite endpoint
    x = np.clip(x, np.nextafter(np.atleast_1d(lower), np.inf),
                np.nextafter(np.atleast_1d(upper), -np.inf))
    return float(x[0]) if scalar else x.reshape(mean.shape)


def trunc_normal_unit(mean, lower, upper, rng: RngStream):
    """Unit-variance truncated normal, vectorised, no validation.

    Hot path of the latent-utility updates; callers guarantee lower < upper.
    """
    x = mean + std_trunc_normal(lower - mean, upper - mean, rng)
    return np.minimum(np.maximum(x, np.nextafter(lower, np.inf)), np.nextafter(upper, -np.inf))


def log_trunc_normal_pdf(x, mean, sd, lower, upper):
    """Log density of N(mean, sd^2) truncated to [lower, upper]."""
    if not lower < upper:
        raise InvalidIntervalError("truncation interval must satisfy lower < upper")
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    # log(Phi(b) - Phi(a)) computed on the side where it is stable
    if a > 0:
        log_mass = log_ndtr(-a) + np.log1p(-np.exp(log_ndtr(-b) - log_ndtr(-a)))
    else:
        log_mass = log_ndtr(b) + np.log1p(-np.exp(log_ndtr(a) - log_ndtr(b)))
    out = -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(sd) - log_mass
    out = np.where((x >= lower) & (x <= upper), out, -np.inf)
    return float(out) if out.ndim == 0 else out


def sample_mvn(cond: GaussianConditional, rng: RngStream) -> np.ndarray:
    chol = cond.cholesky()
    return cond.mean + chol @ rng.normal(cond.mean.size)

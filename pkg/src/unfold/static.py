"""Data-augmented Gibbs sampler for the static probit unfolding model.

The array-level functions (``*_arrays``) do the work for whole vote
matrices at once and are shared with the dynamic sampler. The
single-item wrappers expose the individual full conditionals.

Sweep order: latent utilities, ideal points, then per vote ``z`` with
``alpha`` integrated out, ``alpha | z``, and finally ``delta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_ndtr

from .data import YEA, EmptyDataError, VoteMatrix
from .model import (ItemParams, PriorHyper, items_from_arrays, items_to_arrays,
                    log_theta_pair, sample_item_prior_arrays)
from .rngstats import (GaussianConditional, RngStream, sample_mvn, std_trunc_normal,
                       trunc_normal_unit)
from .samples import PosteriorSamples

log = logging.getLogger(__name__)

# location and |discrimination| of the pinned second component in monotone fits
PIN_DELTA = 1e3
PIN_ALPHA = 1.0


@dataclass(frozen=True)
class LatentUtilities:
    u1: float
    u2: float
    u3: float

    def consistent_with(self, vote: int) -> bool:
        if vote == YEA:
            return self.u2 > max(self.u1, self.u3)
        return self.u2 < max(self.u1, self.u3)


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 1000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    anchor: str | None = None
    hyper: PriorHyper = field(default_factory=PriorHyper)
    # monotone baseline: second component pinned far away, only alpha1/delta1 sampled
    monotone: bool = False

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.iterations < 0 or self.burn_in < 0:
            raise ValueError("iterations and burn_in must be nonnegative")
        if self.burn_in > self.iterations:
            raise ValueError("burn_in must not exceed iterations")

    @property
    def n_stored(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def stores(self, sweep: int) -> bool:
        """Whether 1-based ``sweep`` is kept."""
        k = sweep - self.burn_in
        return k > 0 and k % self.thin == 0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "burn_in": self.burn_in, "thin": self.thin,
                "seed": self.seed, "anchor": self.anchor, "hyper": self.hyper.to_dict(),
                "monotone": self.monotone}


# ---------------------------------------------------------------------------
# array-level conditionals
# ---------------------------------------------------------------------------

class CellData:
    """Flattened observed cells of a vote matrix."""

    def __init__(self, cells: np.ndarray):
        cells = np.asarray(cells)
        self.shape = cells.shape
        self.obs = cells >= 0
        self.rows, self.cols = np.nonzero(self.obs)
        self.yea = cells[self.rows, self.cols] == YEA
        self.n_obs_per_vote = self.obs.sum(axis=0)

    def per_leg_sum(self, values):
        return np.bincount(self.rows, weights=values, minlength=self.shape[0])

    def per_vote_sum(self, values):
        return np.bincount(self.cols, weights=values, minlength=self.shape[1])


def utility_means(beta_obs, alpha, delta, cols):
    """Means of the first and third latent utilities for each observed cell."""
    m1 = -alpha[cols, 0] * (beta_obs - delta[cols, 0])
    m3 = -alpha[cols, 1] * (beta_obs - delta[cols, 1])
    return m1, m3


def update_utilities_arrays(u, m1, m3, yea, rng: RngStream, pin_second=False):
    """One sequential scan over (u1, u2, u3) for every observed cell, in place.

    ``u`` is ``(n, 3)``. With ``pin_second`` the third utility stays at -inf.
    """
    inf = np.inf
    u1, u2, u3 = u[:, 0], u[:, 1], u[:, 2]
    lo = np.where(yea, -inf, np.where(u3 > u2, -inf, u2))
    hi = np.where(yea, u2, inf)
    u1 = trunc_normal_unit(m1, lo, hi, rng)
    mx = np.maximum(u1, u3)
    lo = np.where(yea, mx, -inf)
    hi = np.where(yea, inf, mx)
    u2 = trunc_normal_unit(np.zeros_like(mx), lo, hi, rng)
    if not pin_second:
        lo = np.where(yea, -inf, np.where(u1 > u2, -inf, u2))
        hi = np.where(yea, u2, inf)
        u3 = trunc_normal_unit(m3, lo, hi, rng)
    u[:, 0], u[:, 1], u[:, 2] = u1, u2, u3
    return u


def init_utilities_arrays(m1, m3, yea, rng: RngStream, pin_second=False):
    """A valid augmentation state: free u1, u3, then u2 given the vote."""
    n = m1.size
    u = np.empty((n, 3))
    u[:, 0] = m1 + rng.normal(n)
    u[:, 2] = -np.inf if pin_second else m3 + rng.normal(n)
    mx = np.maximum(u[:, 0], u[:, 2])
    u[:, 1] = trunc_normal_unit(np.zeros(n), np.where(yea, mx, -np.inf),
                                np.where(yea, np.inf, mx), rng)
    return u


def beta_precision_terms(cd: CellData, alpha, delta, u, pin_second=False):
    """Per-cell data precision and linear term for the ideal-point conditional.

    Returns ``(prec, lin)`` over observed cells with the conditional
    precision ``1 + sum prec`` and mean ``sum lin / precision``.
    """
    a1 = alpha[cd.cols, 0]
    prec = a1 * a1
    lin = -a1 * (u[:, 0] - a1 * delta[cd.cols, 0])
    if not pin_second:
        a2 = alpha[cd.cols, 1]
        prec = prec + a2 * a2
        lin = lin - a2 * (u[:, 2] - a2 * delta[cd.cols, 1])
    return prec, lin


def alpha_conditional_arrays(cd: CellData, beta_obs, delta, u, omega2, pin_second=False):
    """Diagonal Gaussian conditional of each alpha_j: means and sds, ``(J, 2)``."""
    J = cd.shape[1]
    mean = np.zeros((J, 2))
    sd = np.full((J, 2), math.sqrt(omega2))
    for k, ucol in ((0, 0), (1, 2)):
        if k == 1 and pin_second:
            break
        x = beta_obs - delta[cd.cols, k]
        prec = cd.per_vote_sum(x * x) + 1.0 / omega2
        mean[:, k] = -cd.per_vote_sum(x * u[:, ucol]) / prec
        sd[:, k] = 1.0 / np.sqrt(prec)
    return mean, sd


def z_log_weights(mean, sd, delta, hyper: PriorHyper, pin_second=False):
    """Unnormalised log P(z = +1) and log P(z = -1) with alpha integrated out."""
    mu = hyper.mu_array
    r = mean / sd
    if pin_second:
        # the pinned component flips with z and contributes equally to both
        lp = -((delta[:, 0] - mu[0]) ** 2) / (2 * hyper.kappa2) + log_ndtr(r[:, 0])
        lm = -((delta[:, 0] + mu[0]) ** 2) / (2 * hyper.kappa2) + log_ndtr(-r[:, 0])
        return lp, lm
    lp = (-((delta - mu) ** 2).sum(1) / (2 * hyper.kappa2)
          + log_ndtr(r[:, 0]) + log_ndtr(-r[:, 1]))
    lm = (-((delta + mu) ** 2).sum(1) / (2 * hyper.kappa2)
          + log_ndtr(-r[:, 0]) + log_ndtr(r[:, 1]))
    return lp, lm


def z_probability(mean, sd, delta, hyper: PriorHyper, pin_second=False):
    lp, lm = z_log_weights(mean, sd, delta, hyper, pin_second)
    return expit(lp - lm)


def sample_alpha_arrays(mean, sd, z, rng: RngStream, pin_second=False):
    """Draw each alpha_j from its conditional restricted to the z_j orthant."""
    inf = np.inf
    pos = z > 0
    out = np.empty((z.size, 2))
    lo = np.where(pos, 0.0, -inf)
    hi = np.where(pos, inf, 0.0)
    out[:, 0] = mean[:, 0] + sd[:, 0] * std_trunc_normal(
        (lo - mean[:, 0]) / sd[:, 0], (hi - mean[:, 0]) / sd[:, 0], rng)
    if pin_second:
        out[:, 1] = -z * PIN_ALPHA
    else:
        lo = np.where(pos, -inf, 0.0)
        hi = np.where(pos, 0.0, inf)
        out[:, 1] = mean[:, 1] + sd[:, 1] * std_trunc_normal(
            (lo - mean[:, 1]) / sd[:, 1], (hi - mean[:, 1]) / sd[:, 1], rng)
    return _enforce_signs(out, z)


def _enforce_signs(alpha, z):
    # rounding in mean + sd * x can land exactly on zero in extreme tails
    tiny = np.finfo(float).tiny
    alpha[:, 0] = np.where(z > 0, np.maximum(alpha[:, 0], tiny), np.minimum(alpha[:, 0], -tiny))
    alpha[:, 1] = np.where(z > 0, np.minimum(alpha[:, 1], -tiny), np.maximum(alpha[:, 1], tiny))
    return alpha


def delta_conditional_arrays(cd: CellData, alpha, z, beta_obs, u, hyper: PriorHyper,
                             pin_second=False):
    """Diagonal Gaussian conditional of each delta_j: means and sds, ``(J, 2)``.

    Built from the augmented likelihood ``u_k + alpha_k beta ~ N(alpha_k delta_k, 1)``.
    """
    J = cd.shape[1]
    mu = hyper.mu_array
    mean = np.empty((J, 2))
    sd = np.empty((J, 2))
    for k, ucol in ((0, 0), (1, 2)):
        a = alpha[:, k]
        if k == 1 and pin_second:
            mean[:, 1] = z * PIN_DELTA
            sd[:, 1] = 0.0
            break
        prec = cd.n_obs_per_vote * a * a + 1.0 / hyper.kappa2
        resid = cd.per_vote_sum(u[:, ucol] + alpha[cd.cols, k] * beta_obs)
        mean[:, k] = (a * resid + z * mu[k] / hyper.kappa2) / prec
        sd[:, k] = 1.0 / np.sqrt(prec)
    return mean, sd


def item_step(cd: CellData, beta_obs, alpha, delta, z, u, hyper: PriorHyper,
              rng: RngStream, pin_second=False):
    """Joint (z, alpha) update followed by the delta update; returns new arrays."""
    am, asd = alpha_conditional_arrays(cd, beta_obs, delta, u, hyper.omega2, pin_second)
    p_plus = z_probability(am, asd, delta, hyper, pin_second)
    z = np.where(rng.uniform(z.size) < p_plus, 1, -1)
    alpha = sample_alpha_arrays(am, asd, z, rng, pin_second)
    dm, dsd = delta_conditional_arrays(cd, alpha, z, beta_obs, u, hyper, pin_second)
    delta = dm + dsd * rng.normal(dm.shape)
    return alpha, delta, z


# ---------------------------------------------------------------------------
# single-item conditionals
# ---------------------------------------------------------------------------

def sample_utilities(vote: int, item: ItemParams, beta: float, current: LatentUtilities,
                     rng: RngStream) -> LatentUtilities:
    m1 = np.array([-item.alpha1 * (beta - item.delta1)])
    m3 = np.array([-item.alpha2 * (beta - item.delta2)])
    u = np.array([[current.u1, current.u2, current.u3]], dtype=float)
    update_utilities_arrays(u, m1, m3, np.array([vote == YEA]), rng)
    return LatentUtilities(*map(float, u[0]))


def beta_conditional(items, utilities) -> GaussianConditional:
    """Gaussian conditional of one ideal point given the items it voted on.

    ``utilities`` pairs with ``items``; only observed cells belong in either.
    """
    prec = 1.0
    lin = 0.0
    for it, ut in zip(items, utilities):
        prec += it.alpha1 ** 2 + it.alpha2 ** 2
        lin -= it.alpha1 * (ut.u1 - it.alpha1 * it.delta1) + it.alpha2 * (ut.u3 - it.alpha2 * it.delta2)
    return GaussianConditional([lin / prec], [[1.0 / prec]])


def alpha_conditional(betas, delta, utilities, omega2: float = 25.0) -> GaussianConditional:
    betas = np.asarray(betas, dtype=float)
    delta = np.asarray(delta, dtype=float)
    y = np.array([[u.u1, u.u3] for u in utilities], dtype=float).reshape(-1, 2)
    x = betas[:, None] - delta[None, :]
    prec = (x * x).sum(0) + 1.0 / omega2
    mean = -(x * y).sum(0) / prec
    return GaussianConditional(mean, np.diag(1.0 / prec))


def z_plus_probability(alpha_cond: GaussianConditional, delta, hyper: PriorHyper) -> float:
    mean = alpha_cond.mean[None, :]
    sd = alpha_cond.sd[None, :]
    return float(z_probability(mean, sd, np.asarray(delta, dtype=float)[None, :], hyper)[0])


def sample_z(alpha_cond: GaussianConditional, delta, hyper: PriorHyper, rng: RngStream) -> int:
    return 1 if rng.uniform() < z_plus_probability(alpha_cond, delta, hyper) else -1


def sample_alpha_given_z(alpha_cond: GaussianConditional, z: int, rng: RngStream) -> np.ndarray:
    a = sample_alpha_arrays(alpha_cond.mean[None, :], alpha_cond.sd[None, :],
                            np.array([z]), rng)
    return a[0]


def delta_conditional(alpha, z: int, betas, utilities, hyper: PriorHyper) -> GaussianConditional:
    alpha = np.asarray(alpha, dtype=float)
    betas = np.asarray(betas, dtype=float)
    y = np.array([[u.u1, u.u3] for u in utilities], dtype=float).reshape(-1, 2)
    prec = betas.size * alpha ** 2 + 1.0 / hyper.kappa2
    resid = (y + alpha[None, :] * betas[:, None]).sum(0)
    mean = (alpha * resid + z * hyper.mu_array / hyper.kappa2) / prec
    return GaussianConditional(mean, np.diag(1.0 / prec))


def sample_delta(alpha, z: int, betas, utilities, hyper: PriorHyper, rng: RngStream) -> np.ndarray:
    return sample_mvn(delta_conditional(alpha, z, betas, utilities, hyper), rng)


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    iteration: int = 0

    @property
    def items(self):
        return items_from_arrays(self.alpha, self.delta, self.z)


def init_items(J, hyper: PriorHyper, rng: RngStream, monotone=False):
    alpha, delta, z = sample_item_prior_arrays(J, hyper, rng)
    if monotone:
        alpha[:, 1] = -z * PIN_ALPHA
        delta[:, 1] = z * PIN_DELTA
    return alpha, delta, z


class StaticSampler:
    """Gibbs sampler over a fixed vote matrix."""

    def __init__(self, cells, hyper: PriorHyper, monotone=False):
        self.cd = CellData(cells)
        self.hyper = hyper
        self.monotone = monotone

    def initial_state(self, rng: RngStream) -> ChainState:
        I, J = self.cd.shape
        beta = rng.normal(I)
        alpha, delta, z = init_items(J, self.hyper, rng, self.monotone)
        m1, m3 = utility_means(beta[self.cd.rows], alpha, delta, self.cd.cols)
        u = init_utilities_arrays(m1, m3, self.cd.yea, rng, self.monotone)
        update_utilities_arrays(u, m1, m3, self.cd.yea, rng, self.monotone)
        return ChainState(beta, alpha, delta, z, u)

    def beta_step(self, state: ChainState, rng: RngStream):
        cd = self.cd
        prec, lin = beta_precision_terms(cd, state.alpha, state.delta, state.u, self.monotone)
        P = 1.0 + cd.per_leg_sum(prec)
        mean = cd.per_leg_sum(lin) / P
        state.beta = mean + rng.normal(P.size) / np.sqrt(P)

    def sweep(self, state: ChainState, rng: RngStream) -> ChainState:
        cd = self.cd
        beta_obs = state.beta[cd.rows]
        m1, m3 = utility_means(beta_obs, state.alpha, state.delta, cd.cols)
        update_utilities_arrays(state.u, m1, m3, cd.yea, rng, self.monotone)
        self.beta_step(state, rng)
        beta_obs = state.beta[cd.rows]
        state.alpha, state.delta, state.z = item_step(
            cd, beta_obs, state.alpha, state.delta, state.z, state.u, self.hyper, rng,
            self.monotone)
        state.iteration += 1
        return state


def check_state(state: ChainState, cd: CellData) -> None:
    """Assert the augmentation and sign invariants."""
    u = state.u
    mx = np.maximum(u[:, 0], u[:, 2])
    assert np.all(np.where(cd.yea, u[:, 1] > mx, u[:, 1] < mx)), "utility invariant violated"
    a = state.alpha
    ok = np.where(state.z > 0, (a[:, 0] > 0) & (a[:, 1] < 0), (a[:, 0] < 0) & (a[:, 1] > 0))
    assert np.all(ok), "sign invariant violated"


def log_likelihood(beta_cells, alpha, delta, cells) -> float:
    """Observed-data log likelihood of one parameter draw."""
    obs = cells >= 0
    lp, lq = log_theta_pair(beta_cells, alpha, delta)
    ll = np.where(cells == YEA, lp, lq)
    return float(ll[obs].sum())


def run_static_chain(data: VoteMatrix, config: ChainConfig, rng: RngStream,
                     debug: bool = False, progress_every: int = 0) -> PosteriorSamples:
    I, J = data.shape
    if I == 0 or J == 0 or not data.observed.any():
        raise EmptyDataError("no observed votes")
    sampler = StaticSampler(data.cells, config.hyper, config.monotone)
    state = sampler.initial_state(rng)
    S = config.n_stored
    beta = np.empty((S, I))
    alpha = np.empty((S, J, 2))
    delta = np.empty((S, J, 2))
    z = np.empty((S, J), dtype=int)
    s = 0
    for it in range(1, config.iterations + 1):
        sampler.sweep(state, rng)
        if debug:
            check_state(state, sampler.cd)
        if config.stores(it):
            beta[s], alpha[s], delta[s], z[s] = state.beta, state.alpha, state.delta, state.z
            s += 1
        if progress_every and it % progress_every == 0:
            log.info("static chain %s: sweep %d/%d", rng, it, config.iterations)
    manifest = {
        "model": "static",
        "config": config.to_dict(),
        "hyper": config.hyper.to_dict(),
        "seed": config.seed,
        "stream_id": rng.stream_id,
        "data_fingerprint": data.fingerprint(),
        "metadata": {"sweeps": config.iterations},
    }
    return PosteriorSamples(kind="static", beta=beta, alpha=alpha, delta=delta, z=z,
                            legislator_ids=data.legislator_ids, vote_ids=data.vote_ids,
                            manifest=manifest)


__all__ = [
    "ChainConfig", "ChainState", "LatentUtilities", "StaticSampler", "alpha_conditional",
    "beta_conditional", "delta_conditional", "run_static_chain", "sample_alpha_given_z",
    "sample_delta", "sample_utilities", "sample_z", "z_plus_probability", "items_to_arrays",
]

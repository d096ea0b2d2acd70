"""Dynamic probit unfolding model: AR(1) ideal-point trajectories and rho.

Items are indexed by vote; each vote belongs to one term, so the item and
latent-utility updates are the static ones applied with the term-specific
ideal point of each cell. Trajectories are drawn jointly per legislator
through the tridiagonal precision ``B + Omega(rho)^-1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from scipy.special import expit, logit

from .data import DynamicVoteData, EmptyDataError
from .rngstats import RngStream, log_trunc_normal_pdf
from .samples import PosteriorSamples
from .static import (CellData, ChainConfig, beta_precision_terms, check_state,
                     init_items, init_utilities_arrays, item_step,
                     update_utilities_arrays, utility_means)

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.40


class DegeneratePriorError(ValueError):
    pass


@dataclass(frozen=True)
class DynamicHyper:
    eta: float = 0.9
    lam: float = 0.04
    tau2: float = 1.0
    adapt: bool = True
    # Robbins-Monro gain on log tau2 at burn-in sweep t is adapt_gain / (t + adapt_offset)
    adapt_gain: float = 5.0
    adapt_offset: float = 10.0

    def __post_init__(self):
        if not (self.lam > 0 and self.tau2 > 0):
            raise ValueError("lambda and tau2 must be positive")

    def to_dict(self) -> dict:
        return {"eta": self.eta, "lambda": self.lam, "tau2": self.tau2, "adapt": self.adapt,
                "adapt_gain": self.adapt_gain, "adapt_offset": self.adapt_offset}


ALTERNATIVE_RHO_PRIOR = DynamicHyper(eta=0.8, lam=0.1)


def omega(rho: float, T: int) -> np.ndarray:
    t = np.arange(T)
    return rho ** np.abs(t[:, None] - t[None, :]).astype(float)


def omega_inverse(rho: float, T: int) -> np.ndarray:
    """Tridiagonal inverse of the AR(1) correlation matrix."""
    if not 0 <= rho < 1:
        raise DegeneratePriorError(f"rho must lie in [0, 1), got {rho}")
    if T < 1:
        raise ValueError("T must be positive")
    c = 1.0 / (1.0 - rho * rho)
    diag = np.full(T, (1.0 + rho * rho) * c)
    diag[0] = diag[-1] = c
    if T == 1:
        diag[0] = 1.0
    out = np.diag(diag)
    idx = np.arange(T - 1)
    out[idx, idx + 1] = out[idx + 1, idx] = -rho * c
    return out


def _omega_inv_bands(rho, mask):
    """Diagonal and off-diagonal of the window-restricted AR(1) precision.

    ``mask`` is ``(n, T)`` with a contiguous run of True per row. Outside the
    window the diagonal is 1 and the coupling 0, so those coordinates are
    independent standard normals and never touch the window.
    """
    c = 1.0 / (1.0 - rho * rho)
    prev_in = np.zeros_like(mask)
    prev_in[:, 1:] = mask[:, :-1]
    next_in = np.zeros_like(mask)
    next_in[:, :-1] = mask[:, 1:]
    # each in-window neighbour adds rho^2 c; a window endpoint has one neighbour
    n_nb = prev_in.astype(int) + next_in.astype(int)
    diag = np.where(mask, np.where(n_nb == 2, (1 + rho * rho) * c, np.where(n_nb == 1, c, 1.0)), 1.0)
    off = np.where(mask[:, :-1] & mask[:, 1:], -rho * c, 0.0)
    return diag, off


@dataclass(frozen=True)
class TrajectoryConditional:
    """Data terms of one trajectory conditional: precision B + Omega^-1, mean -(.)^-1 m."""

    m: np.ndarray
    B: np.ndarray
    rho: float

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if m.shape != B.shape or m.ndim != 1:
            raise ValueError("m and diag(B) must be vectors of the tenure length")
        if np.any(B < 0):
            raise ValueError("B entries must be nonnegative")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "B", B)

    @property
    def precision(self) -> np.ndarray:
        return np.diag(self.B) + omega_inverse(self.rho, self.m.size)

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    @property
    def mean(self) -> np.ndarray:
        return -np.linalg.solve(self.precision, self.m)


def tridiag_gaussian_draw(diag, off, m, eps):
    """Draw ``x ~ N(-P^-1 m, P^-1)`` for a batch of tridiagonal precisions.

    ``diag``/``m``/``eps`` are ``(n, T)``, ``off`` is ``(n, T-1)``. With the
    Cholesky factor ``P = U'U`` the draw is ``-P^-1 m + U^-1 eps``, so
    ``eps = 0`` gives the mean. Cost is linear in T. Short panels run the
    factorization as one vectorised recursion over time; long trajectories
    go row by row through banded LAPACK.
    """
    n, T = diag.shape
    if T > max(n, 64):
        return _tridiag_draw_rows(diag, off, m, eps)
    return _tridiag_draw_batch(diag, off, m, eps)


def _tridiag_draw_batch(diag, off, m, eps):
    n, T = diag.shape
    # time-major copies keep every step of the recursion on contiguous memory
    d, o, r = np.ascontiguousarray(diag.T), np.ascontiguousarray(off.T), -np.ascontiguousarray(m.T)
    e = np.ascontiguousarray(eps.T)
    ld = np.empty((T, n))
    lo = np.empty((max(T - 1, 0), n))
    w = np.empty((T, n))
    ld[0] = np.sqrt(d[0])
    w[0] = r[0] / ld[0]
    for t in range(1, T):
        lo[t - 1] = o[t - 1] / ld[t - 1]
        ld[t] = np.sqrt(d[t] - lo[t - 1] ** 2)
        w[t] = (r[t] - lo[t - 1] * w[t - 1]) / ld[t]
    w += e
    x = np.empty((T, n))
    x[T - 1] = w[T - 1] / ld[T - 1]
    for t in range(T - 2, -1, -1):
        x[t] = (w[t] - lo[t] * x[t + 1]) / ld[t]
    return x.T


def _tridiag_draw_rows(diag, off, m, eps):
    n, T = diag.shape
    x = np.empty((n, T))
    ab = np.zeros((2, T))
    for i in range(n):
        ab[0, 1:] = off[i]
        ab[1] = diag[i]
        U = cholesky_banded(ab, lower=False, check_finite=False)
        x[i] = (-cho_solve_banded((U, False), m[i], check_finite=False)
                + solve_banded((0, 1), U, eps[i], check_finite=False))
    return x


def beta_trajectory_conditional(items_by_term, utilities_by_term, rho: float) -> TrajectoryConditional:
    """Trajectory conditional for one legislator over their tenure window.

    ``items_by_term[t]`` and ``utilities_by_term[t]`` list the items voted on
    in term ``t`` of the window and the matching latent utilities.
    """
    T = len(items_by_term)
    m = np.zeros(T)
    B = np.zeros(T)
    for t, (items, utils) in enumerate(zip(items_by_term, utilities_by_term)):
        for it, ut in zip(items, utils):
            B[t] += it.alpha1 ** 2 + it.alpha2 ** 2
            m[t] += it.alpha1 * (ut.u1 - it.alpha1 * it.delta1) + it.alpha2 * (ut.u3 - it.alpha2 * it.delta2)
    return TrajectoryConditional(m=m, B=B, rho=rho)


def sample_beta_trajectory(cond: TrajectoryConditional, rng: RngStream) -> np.ndarray:
    T = cond.m.size
    diag, off = _omega_inv_bands(cond.rho, np.ones((1, T), dtype=bool))
    eps = rng.normal((1, T))
    return tridiag_gaussian_draw(diag + cond.B[None, :], off, cond.m[None, :], eps)[0]


def trajectory_log_density(beta, mask, rho: float) -> float:
    """Sum over legislators of log N(beta_i | 0, Omega(rho)) on each tenure window.

    ``beta`` is ``(I, T)``; only entries under ``mask`` are read.
    """
    b = np.where(mask, beta, 0.0)
    n = mask.sum()
    pairs = mask[:, 1:] & mask[:, :-1]
    first = mask & ~np.concatenate([np.zeros((mask.shape[0], 1), bool), mask[:, :-1]], axis=1)
    q_first = (b[first] ** 2).sum()
    innov = (b[:, 1:] - rho * b[:, :-1])[pairs]
    s2 = 1.0 - rho * rho
    return float(-0.5 * n * math.log(2 * math.pi) - 0.5 * pairs.sum() * math.log(s2)
                 - 0.5 * q_first - 0.5 * (innov ** 2).sum() / s2)


def rho_log_target(rho, beta, mask, dyn: DynamicHyper) -> float:
    """Log target on the logit scale: trajectories, truncated prior and Jacobian."""
    return (trajectory_log_density(beta, mask, rho)
            + float(log_trunc_normal_pdf(rho, dyn.eta, dyn.lam, 0.0, 1.0))
            + math.log(rho) + math.log1p(-rho))


def rho_log_alpha(rho, rho_new, beta, mask, dyn: DynamicHyper) -> float:
    return rho_log_target(rho_new, beta, mask, dyn) - rho_log_target(rho, beta, mask, dyn)


def rho_mh_step(rho, beta, mask, dyn: DynamicHyper, rng: RngStream, tau2=None):
    """Random-walk Metropolis-Hastings on logit(rho).

    Returns ``(rho_new, accepted, log_alpha)``.
    """
    tau2 = dyn.tau2 if tau2 is None else tau2
    nu = math.sqrt(tau2) * float(rng.normal())
    prop = float(expit(logit(rho) + nu))
    u = float(rng.uniform())
    if not 0.0 < prop < 1.0:
        return rho, False, -np.inf
    la = rho_log_alpha(rho, prop, beta, mask, dyn)
    if math.log(u) < la:
        return prop, True, la
    return rho, False, la


@dataclass
class DynamicState:
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    rho: float
    tau2: float
    iteration: int = 0
    accepted: int = 0
    proposals: int = 0
    adapt_steps: int = 0
    last_accepted: bool = False


class DynamicSampler:
    def __init__(self, cells, vote_term, tenure_mask, hyper, dyn: DynamicHyper):
        self.cd = CellData(cells)
        self.vote_term = np.asarray(vote_term, dtype=int)
        self.mask = np.asarray(tenure_mask, dtype=bool)
        self.hyper = hyper
        self.dyn = dyn
        I, T = self.mask.shape
        self.cell_term = self.vote_term[self.cd.cols]
        # flat (legislator, term) bucket for every observed cell
        self.cell_bucket = self.cd.rows * T + self.cell_term

    @property
    def n_terms(self) -> int:
        return self.mask.shape[1]

    def beta_obs(self, beta):
        return beta[self.cd.rows, self.cell_term]

    def draw_prior_trajectories(self, rho, rng: RngStream):
        I, T = self.mask.shape
        diag, off = _omega_inv_bands(rho, self.mask)
        beta = tridiag_gaussian_draw(diag, off, np.zeros((I, T)), rng.normal((I, T)))
        return np.where(self.mask, beta, np.nan)

    def initial_state(self, rng: RngStream) -> DynamicState:
        rho = min(max(self.dyn.eta, 0.05), 0.95)
        beta = self.draw_prior_trajectories(rho, rng)
        J = self.cd.shape[1]
        alpha, delta, z = init_items(J, self.hyper, rng)
        m1, m3 = utility_means(self.beta_obs(beta), alpha, delta, self.cd.cols)
        u = init_utilities_arrays(m1, m3, self.cd.yea, rng)
        update_utilities_arrays(u, m1, m3, self.cd.yea, rng)
        return DynamicState(beta, alpha, delta, z, u, rho, self.dyn.tau2)

    def trajectory_terms(self, state: DynamicState):
        """Per (legislator, term) B and m, ``(I, T)`` each."""
        I, T = self.mask.shape
        prec, lin = beta_precision_terms(self.cd, state.alpha, state.delta, state.u)
        B = np.bincount(self.cell_bucket, weights=prec, minlength=I * T).reshape(I, T)
        # lin = -alpha'(u - D_alpha delta); m carries the opposite sign so that mean = -P^-1 m
        m = -np.bincount(self.cell_bucket, weights=lin, minlength=I * T).reshape(I, T)
        return B, m

    def beta_step(self, state: DynamicState, rng: RngStream):
        I, T = self.mask.shape
        B, m = self.trajectory_terms(state)
        diag, off = _omega_inv_bands(state.rho, self.mask)
        beta = tridiag_gaussian_draw(diag + B, off, m, rng.normal((I, T)))
        state.beta = np.where(self.mask, beta, np.nan)

    def rho_step(self, state: DynamicState, rng: RngStream, adapting: bool):
        rho, acc, _ = rho_mh_step(state.rho, state.beta, self.mask, self.dyn, rng, state.tau2)
        state.rho = rho
        state.proposals += 1
        state.accepted += int(acc)
        state.last_accepted = acc
        if adapting:
            state.adapt_steps += 1
            gain = self.dyn.adapt_gain / (state.adapt_steps + self.dyn.adapt_offset)
            log_tau2 = math.log(state.tau2) + gain * (float(acc) - TARGET_ACCEPTANCE)
            state.tau2 = math.exp(min(max(log_tau2, -20.0), 10.0))
        return acc

    def sweep(self, state: DynamicState, rng: RngStream, adapting=False) -> DynamicState:
        cd = self.cd
        bo = self.beta_obs(state.beta)
        m1, m3 = utility_means(bo, state.alpha, state.delta, cd.cols)
        update_utilities_arrays(state.u, m1, m3, cd.yea, rng)
        self.beta_step(state, rng)
        bo = self.beta_obs(state.beta)
        state.alpha, state.delta, state.z = item_step(
            cd, bo, state.alpha, state.delta, state.z, state.u, self.hyper, rng)
        self.rho_step(state, rng, adapting)
        state.iteration += 1
        return state


def run_dynamic_chain(data: DynamicVoteData, config: ChainConfig, dyn: DynamicHyper,
                      rng: RngStream, debug: bool = False, progress_every: int = 0) -> PosteriorSamples:
    base = data.base
    I, J = base.shape
    if I == 0 or J == 0 or not base.observed.any():
        raise EmptyDataError("no observed votes")
    sampler = DynamicSampler(base.cells, data.vote_term, data.tenure_mask(), config.hyper, dyn)
    state = sampler.initial_state(rng)
    T = data.n_terms
    S = config.n_stored
    beta = np.empty((S, I, T))
    alpha = np.empty((S, J, 2))
    delta = np.empty((S, J, 2))
    z = np.empty((S, J), dtype=int)
    rho = np.empty(S)
    s = 0
    post_acc = post_prop = 0
    tau2_frozen = None
    for it in range(1, config.iterations + 1):
        adapting = dyn.adapt and it <= config.burn_in
        sampler.sweep(state, rng, adapting)
        if it > config.burn_in:
            if tau2_frozen is None:
                tau2_frozen = state.tau2
            assert state.tau2 == tau2_frozen, "tau2 changed after burn-in"
            post_prop += 1
            post_acc += int(state.last_accepted)
        if debug:
            check_state(state, sampler.cd)
        if config.stores(it):
            beta[s], alpha[s], delta[s], z[s], rho[s] = (
                state.beta, state.alpha, state.delta, state.z, state.rho)
            s += 1
        if progress_every and it % progress_every == 0:
            log.info("dynamic chain %s: sweep %d/%d rho=%.3f tau2=%.3g",
                     rng, it, config.iterations, state.rho, state.tau2)
    metadata = {
        "sweeps": config.iterations,
        "acceptance_rate": state.accepted / max(state.proposals, 1),
        "post_burnin_acceptance_rate": post_acc / post_prop if post_prop else None,
        "tau2_final": state.tau2,
        "adapt_steps": state.adapt_steps,
    }
    return _finish(data, config, dyn, rng, beta, alpha, delta, z, rho, metadata)


def _finish(data, config, dyn, rng, beta, alpha, delta, z, rho, metadata):
    manifest = {
        "model": "dynamic",
        "config": config.to_dict(),
        "hyper": config.hyper.to_dict(),
        "dynamic_hyper": dyn.to_dict(),
        "seed": config.seed,
        "stream_id": rng.stream_id,
        "data_fingerprint": data.base.fingerprint(),
        "term_labels": list(data.terms),
        "metadata": metadata,
    }
    return PosteriorSamples(kind="dynamic", beta=beta, alpha=alpha, delta=delta, z=z,
                            legislator_ids=data.base.legislator_ids, vote_ids=data.base.vote_ids,
                            rho=rho, vote_term=data.vote_term, tenure=data.tenure,
                            manifest=manifest)

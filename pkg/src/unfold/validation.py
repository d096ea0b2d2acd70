"""Joint-distribution checks for the samplers.

The successive-conditional test (Geweke 2004) alternates a draw of the
augmented data given the parameters with one Gibbs sweep given the data.
If every conditional is right the parameter marginals stay at the prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dynamic import DynamicHyper, DynamicSampler
from .model import PriorHyper
from .rngstats import RngStream
from .static import StaticSampler


def batch_means_se(x, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean of an autocorrelated trace."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _simulate_augmented(beta_obs, alpha, delta, cols, rng: RngStream):
    n = beta_obs.size
    u = np.empty((n, 3))
    u[:, 0] = -alpha[cols, 0] * (beta_obs - delta[cols, 0]) + rng.normal(n)
    u[:, 1] = rng.normal(n)
    u[:, 2] = -alpha[cols, 1] * (beta_obs - delta[cols, 1]) + rng.normal(n)
    yea = u[:, 1] > np.maximum(u[:, 0], u[:, 2])
    return u, yea


@dataclass
class MomentCheck:
    name: str
    estimate: float
    expected: float
    se: float

    @property
    def z_score(self) -> float:
        return (self.estimate - self.expected) / self.se if self.se > 0 else float("inf")

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.expected) <= 3.0 * self.se

    def __str__(self) -> str:
        return (f"{self.name}: {self.estimate:.4f} vs {self.expected:.4f} "
                f"(se {self.se:.4f}, z {self.z_score:+.2f})")


def geweke_static(I: int, J: int, hyper: PriorHyper, n_sweeps: int, rng: RngStream,
                  burn: int = 1000):
    """Traces of beta_1, alpha_{1,1}, delta_{1,1} and z_1 under successive conditionals."""
    cells = np.ones((I, J), dtype=np.int8)
    sampler = StaticSampler(cells, hyper)
    cd = sampler.cd
    state = sampler.initial_state(rng)
    out = np.empty((n_sweeps, 4))
    for it in range(-burn, n_sweeps):
        u, yea = _simulate_augmented(state.beta[cd.rows], state.alpha, state.delta, cd.cols, rng)
        state.u = u
        cd.yea = yea
        sampler.sweep(state, rng)
        if it >= 0:
            out[it] = state.beta[0], state.alpha[0, 0], state.delta[0, 0], state.z[0]
    return {"beta_1": out[:, 0], "alpha_11": out[:, 1], "delta_11": out[:, 2], "z_1": out[:, 3]}


def static_prior_checks(traces, hyper: PriorHyper, n_batches: int = 50):
    """Compare first and second moments of the traces with their prior values."""
    mu1 = hyper.mu[0]
    targets = {
        "beta_1": (0.0, 1.0),
        "alpha_11": (0.0, hyper.omega2),
        "delta_11": (0.0, hyper.kappa2 + mu1 ** 2),
    }
    checks = []
    for name, (mean, second) in targets.items():
        x = traces[name]
        checks.append(MomentCheck(f"E[{name}]", x.mean(), mean, batch_means_se(x, n_batches)))
        checks.append(MomentCheck(f"E[{name}^2]", (x ** 2).mean(), second,
                                  batch_means_se(x ** 2, n_batches)))
    zp = (traces["z_1"] > 0).astype(float)
    checks.append(MomentCheck("P(z_1=+1)", zp.mean(), 0.5, batch_means_se(zp, n_batches)))
    return checks


def geweke_dynamic(I: int, J_per_term: int, T: int, hyper: PriorHyper, dyn: DynamicHyper,
                   n_sweeps: int, rng: RngStream, burn: int = 1000):
    """Successive-conditional traces for the dynamic sampler, full tenure for everyone."""
    J = J_per_term * T
    vote_term = np.repeat(np.arange(T), J_per_term)
    cells = np.ones((I, J), dtype=np.int8)
    mask = np.ones((I, T), dtype=bool)
    sampler = DynamicSampler(cells, vote_term, mask, hyper, dyn)
    cd = sampler.cd
    state = sampler.initial_state(rng)
    out = np.empty((n_sweeps, 5))
    for it in range(-burn, n_sweeps):
        u, yea = _simulate_augmented(sampler.beta_obs(state.beta), state.alpha, state.delta,
                                     cd.cols, rng)
        state.u = u
        cd.yea = yea
        sampler.sweep(state, rng, adapting=False)
        if it >= 0:
            out[it] = (state.rho, state.beta[0, 0], state.alpha[0, 0], state.delta[0, 0],
                       state.z[0])
    return {"rho": out[:, 0], "beta_11": out[:, 1], "alpha_11": out[:, 2],
            "delta_11": out[:, 3], "z_1": out[:, 4]}


def truncated_rho_moments(dyn: DynamicHyper):
    a, b = (0.0 - dyn.eta) / dyn.lam, (1.0 - dyn.eta) / dyn.lam
    dist = stats.truncnorm(a, b, loc=dyn.eta, scale=dyn.lam)
    return float(dist.mean()), float(dist.var() + dist.mean() ** 2)


def dynamic_prior_checks(traces, hyper: PriorHyper, dyn: DynamicHyper, n_batches: int = 50):
    checks = static_prior_checks(
        {"beta_1": traces["beta_11"], "alpha_11": traces["alpha_11"],
         "delta_11": traces["delta_11"], "z_1": traces["z_1"]}, hyper, n_batches)
    m1, m2 = truncated_rho_moments(dyn)
    x = traces["rho"]
    checks.append(MomentCheck("E[rho]", x.mean(), m1, batch_means_se(x, n_batches)))
    checks.append(MomentCheck("E[rho^2]", (x ** 2).mean(), m2, batch_means_se(x ** 2, n_batches)))
    return checks

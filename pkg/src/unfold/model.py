"""Item parameters, the probit unfolding response function and its prior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rngstats import RngStream, bvn_response_cdf, bvn_response_sf

ALPHA_EPS = 1e-12


class InvalidGeometryError(ValueError):
    pass


class InvalidItemError(ValueError):
    pass


@dataclass(frozen=True)
class PriorHyper:
    mu: tuple = (-2.0, 10.0)
    omega2: float = 25.0
    kappa2: float = 10.0

    def __post_init__(self):
        mu = tuple(float(m) for m in self.mu)
        if len(mu) != 2:
            raise ValueError("mu must have two components")
        if not (self.omega2 > 0 and self.kappa2 > 0):
            raise ValueError("omega2 and kappa2 must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "omega2", float(self.omega2))
        object.__setattr__(self, "kappa2", float(self.kappa2))

    @property
    def mu_array(self) -> np.ndarray:
        return np.array(self.mu)

    def to_dict(self) -> dict:
        return {"mu": list(self.mu), "omega2": self.omega2, "kappa2": self.kappa2}


# alternative prior used in the sensitivity analysis
ALTERNATIVE_PRIOR = PriorHyper(mu=(-2.0, 10.0), omega2=1.0, kappa2=9.0)


@dataclass(frozen=True)
class ItemParams:
    """Discriminations, locations and orthant sign of one vote.

    ``z = +1`` means ``alpha1 > 0 > alpha2``; ``z = -1`` the mirror image.
    """

    alpha1: float
    alpha2: float
    delta1: float
    delta2: float
    z: int

    def __post_init__(self):
        if abs(self.alpha1) < ALPHA_EPS or abs(self.alpha2) < ALPHA_EPS:
            raise InvalidItemError("alpha components must be nonzero")
        expected = 1 if self.alpha1 > 0 else -1
        if np.sign(self.alpha1) == np.sign(self.alpha2):
            raise InvalidItemError("alpha components must have opposite signs")
        if self.z != expected:
            raise InvalidItemError(f"z={self.z} inconsistent with alpha1={self.alpha1}")

    @property
    def alpha(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2])

    @property
    def delta(self) -> np.ndarray:
        return np.array([self.delta1, self.delta2])

    def negate(self) -> "ItemParams":
        return ItemParams(-self.alpha1, -self.alpha2, -self.delta1, -self.delta2, -self.z)

    def to_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2,
                "delta1": self.delta1, "delta2": self.delta2, "z": self.z}

    @classmethod
    def from_dict(cls, d: dict) -> "ItemParams":
        return cls(float(d["alpha1"]), float(d["alpha2"]),
                   float(d["delta1"]), float(d["delta2"]), int(d["z"]))


@dataclass(frozen=True)
class PsiTriple:
    psi1: float
    psi2: float
    psi3: float

    def __post_init__(self):
        ordered = self.psi1 < self.psi2 < self.psi3 or self.psi3 < self.psi2 < self.psi1
        if not ordered:
            raise InvalidGeometryError(
                f"psi positions must be strictly ordered around psi2, got {self}")


def item_from_psi(psi: PsiTriple) -> ItemParams:
    """Map Nay-below / Aye / Nay-above positions to (alpha, delta)."""
    a1 = 2.0 * (psi.psi2 - psi.psi1)
    a2 = 2.0 * (psi.psi2 - psi.psi3)
    d1 = (psi.psi1 + psi.psi2) / 2.0
    d2 = (psi.psi3 + psi.psi2) / 2.0
    return ItemParams(a1, a2, d1, d2, 1 if a1 > 0 else -1)


def response_args(beta, alpha, delta):
    """The two CDF arguments ``alpha_k * (beta - delta_k)``.

    ``alpha`` and ``delta`` have a trailing axis of length 2 and broadcast
    against ``beta``.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float)
    a = alpha[..., 0] * (beta - delta[..., 0])
    b = alpha[..., 1] * (beta - delta[..., 1])
    return a, b


def response_probability(beta, item: ItemParams):
    """Probability of a Yea vote at ideal point ``beta``."""
    a, b = response_args(beta, item.alpha, item.delta)
    return bvn_response_cdf(a, b)


def theta_matrix(beta, alpha, delta):
    """Yea probabilities for arrays: beta (..., I, 1) or (..., I, J), items (..., J, 2)."""
    a, b = response_args(beta, alpha, delta)
    return bvn_response_cdf(a, b)


_LOG_FLOOR = 1e-300


def log_theta_pair(beta, alpha, delta):
    """Return (log theta, log(1 - theta)) computed without cancellation."""
    a, b = response_args(beta, alpha, delta)
    p = np.atleast_1d(bvn_response_cdf(a, b))
    q = np.atleast_1d(bvn_response_sf(a, b))
    return np.log(np.maximum(p, _LOG_FLOOR)), np.log(np.maximum(q, _LOG_FLOOR))


def log_prior_item(item: ItemParams, hyper: PriorHyper) -> float:
    """Log density of the two-component truncated Gaussian prior on (alpha, delta)."""
    return float(log_prior_arrays(item.alpha, item.delta, hyper))


def log_prior_arrays(alpha, delta, hyper: PriorHyper):
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float)
    mu = hyper.mu_array
    # each mixture component has weight 1/2 and its alpha part is a
    # quarter-plane truncated N(0, omega2 I), so the normaliser is 1/(2 pi^2 omega2 kappa2)
    log_norm = -math.log(2.0 * math.pi ** 2 * hyper.omega2 * hyper.kappa2)
    quad_a = (alpha ** 2).sum(-1) / hyper.omega2
    plus = (alpha[..., 0] > 0) & (alpha[..., 1] < 0)
    minus = (alpha[..., 0] < 0) & (alpha[..., 1] > 0)
    centre = np.where(plus[..., None], mu, -mu)
    quad_d = ((delta - centre) ** 2).sum(-1) / hyper.kappa2
    out = log_norm - 0.5 * (quad_a + quad_d)
    return np.where(plus | minus, out, -np.inf)


def sample_item_prior_arrays(n: int, hyper: PriorHyper, rng: RngStream):
    """Draw ``n`` items from the prior; returns (alpha (n,2), delta (n,2), z (n,))."""
    z = np.where(rng.uniform(n) < 0.5, 1, -1)
    scale = math.sqrt(hyper.omega2)
    mag = np.abs(rng.normal((n, 2))) * scale
    alpha = np.stack([z * mag[:, 0], -z * mag[:, 1]], axis=1)
    delta = z[:, None] * hyper.mu_array + math.sqrt(hyper.kappa2) * rng.normal((n, 2))
    return alpha, delta, z


def sample_item_prior(hyper: PriorHyper, rng: RngStream) -> ItemParams:
    alpha, delta, z = sample_item_prior_arrays(1, hyper, rng)
    return ItemParams(alpha[0, 0], alpha[0, 1], delta[0, 0], delta[0, 1], int(z[0]))


def prior_theta_draws(n: int, hyper: PriorHyper, rng: RngStream) -> np.ndarray:
    """Implied prior draws of the Yea probability with beta ~ N(0, 1)."""
    alpha, delta, _ = sample_item_prior_arrays(n, hyper, rng)
    beta = rng.normal(n)
    return theta_matrix(beta, alpha, delta)


def items_to_arrays(items):
    alpha = np.array([[it.alpha1, it.alpha2] for it in items], dtype=float).reshape(-1, 2)
    delta = np.array([[it.delta1, it.delta2] for it in items], dtype=float).reshape(-1, 2)
    z = np.array([it.z for it in items], dtype=int)
    return alpha, delta, z


def items_from_arrays(alpha, delta, z):
    return [ItemParams(float(a[0]), float(a[1]), float(d[0]), float(d[1]), int(s))
            for a, d, s in zip(alpha, delta, z)]


def is_monotone_on_grid(item: ItemParams, grid=None) -> bool:
    """Whether the response curve is one-signed in its first differences on ``grid``."""
    if grid is None:
        grid = np.linspace(-3.0, 3.0, 121)
    diff = np.diff(response_probability(np.asarray(grid), item))
    tol = 1e-12
    return bool(np.all(diff >= -tol) or np.all(diff <= tol))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def simulate_votes(betas, items, missing_rate: float, rng: RngStream,
                   vote_term=None, legislator_ids=None, parties=None, vote_ids=None):
    """Draw a vote matrix from the response function, then mask cells MCAR.

    ``betas`` is ``(I,)`` for static data or ``(I, T)`` trajectories, in which
    case ``vote_term`` gives each vote's 0-based term and NaN entries mark
    terms outside a legislator's tenure (those cells are Missing).
    """
    from .data import MISSING, VoteMatrix

    if not 0 <= missing_rate < 1:
        raise ValueError("missing_rate must lie in [0, 1)")
    betas = np.asarray(betas, dtype=float)
    alpha, delta, _ = items_to_arrays(items) if not isinstance(items, tuple) else items
    I, J = betas.shape[0], alpha.shape[0]
    if betas.ndim == 1:
        beta_cells = np.broadcast_to(betas[:, None], (I, J))
    else:
        beta_cells = betas[:, np.asarray(vote_term)]
    absent = np.isnan(beta_cells)
    theta = theta_matrix(np.where(absent, 0.0, beta_cells), alpha, delta)
    cells = (rng.uniform((I, J)) < theta).astype(np.int8)
    cells[rng.uniform((I, J)) < missing_rate] = MISSING
    cells[absent] = MISSING
    return VoteMatrix(
        legislator_ids=legislator_ids or [f"L{i + 1:03d}" for i in range(I)],
        parties=parties or ["NA"] * I,
        vote_ids=vote_ids or [f"V{j + 1:04d}" for j in range(J)],
        cells=cells,
        terms=None if vote_term is None else [int(t) + 1 for t in vote_term],
    )


def ends_against_middle_items(n: int, rng: RngStream, spread=(0.6, 2.0)):
    """Non-monotone items built from ordered psi triples around a central Aye position."""
    psi2 = rng.uniform(n) * 2.0 - 1.0
    lo, hi = spread
    gap1 = lo + (hi - lo) * rng.uniform(n)
    gap3 = lo + (hi - lo) * rng.uniform(n)
    flip = rng.uniform(n) < 0.5
    out = []
    for p2, g1, g3, f in zip(psi2, gap1, gap3, flip):
        psi = PsiTriple(p2 + g3, p2, p2 - g1) if f else PsiTriple(p2 - g1, p2, p2 + g3)
        out.append(item_from_psi(psi))
    return out


def partisan_items(n: int, rng: RngStream, far: float = 50.0):
    """Monotone items: one Nay position pushed far out so the curve is a probit."""
    out = []
    cut = rng.normal(n) * 0.8
    slope = 1.0 + 2.0 * rng.uniform(n)
    flip = rng.uniform(n) < 0.5
    for c, s, f in zip(cut, slope, flip):
        # psi1 = c - s/2, psi2 = c + s/2 gives alpha1 = 2s > 0 and delta1 = c
        psi = PsiTriple(c - s / 2, c + s / 2, c + far)
        item = item_from_psi(psi)
        out.append(item.negate() if f else item)
    return out


def scenario_items(scenario: str, n: int, rng: RngStream, nonmonotone_fraction: float = 0.37):
    if scenario == "partisan":
        return partisan_items(n, rng)
    if scenario == "ends-against-middle":
        return ends_against_middle_items(n, rng)
    if scenario == "mixed":
        k = int(round(nonmonotone_fraction * n))
        items = ends_against_middle_items(k, rng) + partisan_items(n - k, rng)
        order = rng.gen.permutation(n)
        return [items[i] for i in order]
    raise ValueError(f"unknown scenario {scenario!r}")


def simulate_trajectories(n: int, T: int, rho: float, rng: RngStream) -> np.ndarray:
    """Stationary AR(1) paths with unit marginal variance, ``(n, T)``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    out = np.empty((n, T))
    out[:, 0] = rng.normal(n)
    s = math.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        out[:, t] = rho * out[:, t - 1] + s * rng.normal(n)
    return out

"""Post-processing of posterior draws: anchoring, WAIC, ranks and summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .data import YEA, VoteMatrix
from .model import log_theta_pair, theta_matrix
from .samples import InsufficientSamplesError, PosteriorSamples


class FingerprintMismatchError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


class InsufficientChainsError(ValueError):
    pass


def check_fingerprint(samples: PosteriorSamples, data: VoteMatrix) -> None:
    stored = samples.manifest.get("data_fingerprint")
    if stored is not None and stored != data.fingerprint():
        raise FingerprintMismatchError("sample store was produced from different data")
    if tuple(samples.legislator_ids) != data.legislator_ids or tuple(samples.vote_ids) != data.vote_ids:
        raise FingerprintMismatchError("legislator or vote ids differ from the data")


def apply_sign_anchor(samples: PosteriorSamples, anchor: str) -> PosteriorSamples:
    """Reflect every draw in which the anchor legislator sits below zero.

    The anchor statistic is beta (static) or the tenure-mean trajectory
    (dynamic). Reflection negates all ideal points, alpha and delta and
    flips z, which leaves every response probability unchanged.
    """
    try:
        i = list(samples.legislator_ids).index(anchor)
    except ValueError:
        raise KeyError(f"unknown anchor legislator {anchor!r}") from None
    out = samples.copy()
    stat = out.beta_summary()[:, i]
    flip = stat < 0
    sign = np.where(flip, -1.0, 1.0)
    out.beta = out.beta * sign.reshape(-1, *([1] * (out.beta.ndim - 1)))
    out.alpha = out.alpha * sign[:, None, None]
    out.delta = out.delta * sign[:, None, None]
    out.z = (out.z * sign[:, None]).astype(int)
    out.manifest.setdefault("postprocessing", {})["sign_anchor"] = anchor
    return out


def loglik_draws(samples: PosteriorSamples, data: VoteMatrix):
    """Per-draw log likelihood summed by legislator ``(S, I)`` and by vote ``(S, J)``."""
    S = samples.n_draws
    I, J = data.shape
    obs = data.observed
    yea = data.cells == YEA
    by_leg = np.zeros((S, I))
    by_vote = np.zeros((S, J))
    for s in range(S):
        if samples.dynamic:
            bc = samples.beta[s][:, samples.vote_term]
            bc = np.where(obs, bc, 0.0)
        else:
            bc = samples.beta[s][:, None]
        lp, lq = log_theta_pair(bc, samples.alpha[s], samples.delta[s])
        ll = np.where(obs, np.where(yea, lp, lq), 0.0)
        by_leg[s] = ll.sum(axis=1)
        by_vote[s] = ll.sum(axis=0)
    return by_leg, by_vote


def _blocked_waic(block_ll):
    """WAIC contribution of each block from ``(S, n_blocks)`` log likelihoods."""
    S = block_ll.shape[0]
    lppd = logsumexp(block_ll, axis=0) - np.log(S)
    penalty = block_ll.var(axis=0, ddof=1) if S > 1 else np.zeros(block_ll.shape[1])
    return -2.0 * (lppd - penalty), lppd, penalty


@dataclass
class WaicReport:
    total: float
    per_unit: np.ndarray
    per_vote: np.ndarray
    lppd_unit: np.ndarray
    penalty_unit: np.ndarray
    lppd_vote: np.ndarray
    penalty_vote: np.ndarray


def waic(samples: PosteriorSamples, data: VoteMatrix, check: bool = True) -> WaicReport:
    if samples.n_draws == 0:
        raise InsufficientSamplesError("WAIC needs at least one draw")
    if check:
        check_fingerprint(samples, data)
    by_leg, by_vote = loglik_draws(samples, data)
    per_unit, lppd_u, pen_u = _blocked_waic(by_leg)
    per_vote, lppd_v, pen_v = _blocked_waic(by_vote)
    return WaicReport(total=float(per_unit.sum()), per_unit=per_unit, per_vote=per_vote,
                      lppd_unit=lppd_u, penalty_unit=pen_u, lppd_vote=lppd_v, penalty_vote=pen_v)


def waic_blocked(samples: PosteriorSamples, data: VoteMatrix, check: bool = True) -> WaicReport:
    """Legislator-blocked WAIC; the report also carries the vote-blocked scores."""
    return waic(samples, data, check)


def waic_per_vote(samples: PosteriorSamples, data: VoteMatrix, check: bool = True) -> np.ndarray:
    return waic(samples, data, check).per_vote


def spearman(rank_a, rank_b) -> float:
    """Pearson correlation of midranks."""
    a = np.asarray(rank_a, dtype=float)
    b = np.asarray(rank_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise UndefinedCorrelationError("need two equal-length vectors of length >= 2")
    ra = rankdata(a)
    rb = rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0:
        raise UndefinedCorrelationError("constant ranking")
    return float(np.clip((ra * rb).sum() / denom, -1.0, 1.0))


@dataclass
class RankSummary:
    median_rank: np.ndarray
    rank_draws: np.ndarray
    term_rank_draws: np.ndarray | None = None


def rank_summary(samples: PosteriorSamples) -> RankSummary:
    """Per-draw midranks of the ideal points (tenure means when dynamic)."""
    stat = samples.beta_summary()
    ranks = rankdata(stat, axis=1) if samples.n_draws else np.zeros((0, stat.shape[1]))
    med = np.median(ranks, axis=0) if samples.n_draws else np.full(stat.shape[1], np.nan)
    term_ranks = None
    if samples.dynamic and samples.n_draws:
        # rank only legislators serving in each term; others stay NaN
        term_ranks = rankdata(samples.beta, axis=1, nan_policy="omit")
    return RankSummary(median_rank=med, rank_draws=ranks, term_rank_draws=term_ranks)


def spearman_draws(a: PosteriorSamples, b: PosteriorSamples) -> np.ndarray:
    """Spearman correlation between the rankings of paired draws."""
    n = min(a.n_draws, b.n_draws)
    sa, sb = a.beta_summary(), b.beta_summary()
    return np.array([spearman(sa[s], sb[s]) for s in range(n)])


_METRICS = {
    "range": lambda x: x.max(axis=-1) - x.min(axis=-1),
    "sd": lambda x: x.std(axis=-1, ddof=1),
    "iqr": lambda x: np.subtract(*np.percentile(x, [75, 25], axis=-1)),
}


@dataclass
class DispersionResult:
    ratios: np.ndarray
    mean: float
    excluded: int


def dispersion_ratio(samples: PosteriorSamples, group_a, group_b, metric: str = "range") -> DispersionResult:
    """Per-draw spread of group A over spread of group B."""
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}")
    ids = list(samples.legislator_ids)
    try:
        ia = [ids.index(g) for g in group_a]
        ib = [ids.index(g) for g in group_b]
    except ValueError as exc:
        raise KeyError(str(exc)) from None
    if len(ia) < 2 or len(ib) < 2:
        raise ValueError("each group needs at least two legislators")
    stat = samples.beta_summary()
    f = _METRICS[metric]
    num = f(stat[:, ia])
    den = f(stat[:, ib])
    ok = den > 0
    ratios = num[ok] / den[ok]
    mean = float(ratios.mean()) if ratios.size else float("nan")
    return DispersionResult(ratios=ratios, mean=mean, excluded=int((~ok).sum()))


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor for one scalar across chains."""
    x = [np.asarray(c, dtype=float) for c in chains]
    if len(x) < 2:
        raise InsufficientChainsError("need at least two chains")
    n = x[0].size
    if any(c.size != n for c in x) or n < 10:
        raise ValueError("chains must have equal length of at least 10")
    x = np.stack(x)
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    return float(np.sqrt((W * (n - 1) / n + B / n) / W))


@dataclass
class ResponseCurve:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def response_curve(samples: PosteriorSamples, vote: str, grid) -> ResponseCurve:
    try:
        j = list(samples.vote_ids).index(vote)
    except ValueError:
        raise KeyError(f"unknown vote id {vote!r}") from None
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    theta = theta_matrix(grid[None, :], samples.alpha[:, j, None, :], samples.delta[:, j, None, :])
    theta = np.atleast_2d(theta)
    lo, hi = np.percentile(theta, [2.5, 97.5], axis=0)
    return ResponseCurve(grid=grid, mean=theta.mean(axis=0), lower=lo, upper=hi)


def log_posterior_draws(samples: PosteriorSamples, data: VoteMatrix, hyper) -> np.ndarray:
    """Unnormalised log joint posterior of each stored draw (monitoring scalar)."""
    from .model import log_prior_arrays

    by_leg, _ = loglik_draws(samples, data)
    lp = by_leg.sum(axis=1)
    lp = lp + log_prior_arrays(samples.alpha, samples.delta, hyper).sum(axis=1)
    if samples.dynamic:
        from .dynamic import trajectory_log_density

        mask = ~np.isnan(samples.beta[0]) if samples.n_draws else None
        lp = lp + np.array([trajectory_log_density(samples.beta[s], mask, samples.rho[s])
                            for s in range(samples.n_draws)])
    else:
        lp = lp - 0.5 * (samples.beta ** 2).sum(axis=1)
    return lp

"""Bayesian probit unfolding models for roll-call votes.

Static and dynamic (AR(1) trajectory) samplers built on data augmentation,
plus the post-processing used to compare fits: reflection anchoring,
blocked WAIC, rank summaries, dispersion ratios and response curves.
"""

from .data import VoteMatrix, align_terms, load_vote_matrix, preprocess
from .dynamic import DynamicHyper, run_dynamic_chain
from .inference import (apply_sign_anchor, dispersion_ratio, gelman_rubin, rank_summary,
                        response_curve, spearman, waic_blocked, waic_per_vote)
from .model import ItemParams, PriorHyper, PsiTriple, item_from_psi, response_probability
from .rngstats import RngStream, bvn_response_cdf, sample_trunc_normal
from .samples import PosteriorSamples, read_store, write_store
from .static import ChainConfig, run_static_chain

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "DynamicHyper", "ItemParams", "PosteriorSamples", "PriorHyper", "PsiTriple",
    "RngStream", "VoteMatrix", "align_terms", "apply_sign_anchor", "bvn_response_cdf",
    "dispersion_ratio", "gelman_rubin", "item_from_psi", "load_vote_matrix", "preprocess",
    "rank_summary", "read_store", "response_curve", "response_probability",
    "run_dynamic_chain", "run_static_chain", "sample_trunc_normal", "spearman",
    "waic_blocked", "waic_per_vote", "write_store",
]

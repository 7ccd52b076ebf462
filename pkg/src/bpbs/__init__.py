"""Bayesian spline regression with a fused P-spline / g-prior penalty and basis-dimension selection."""

__version__ = "0.1.0"

from .model import ModelConfig, log_marginal_likelihood
from .posterior import CurveSummary, curve_summary, derivative_summary, model_size_summary
from .sampler import ChainState, CoefficientPrior, GibbsSampler, PosteriorDraws, run_chain
from .splines import KnotGrid, PenaltySet, SplineBasis, eval_basis, make_knots, penalty_set, transform_map

__all__ = [
    "ChainState", "CoefficientPrior", "CurveSummary", "GibbsSampler", "KnotGrid", "ModelConfig",
    "PenaltySet", "PosteriorDraws", "SplineBasis", "curve_summary", "derivative_summary",
    "eval_basis", "log_marginal_likelihood", "make_knots", "model_size_summary", "penalty_set",
    "run_chain", "transform_map",
]

"""Laplace noise with a randomized scale for DP-SGD: MGF algebra, Renyi
accounting, parameter search, sampling, noise analysis and a desk-scale
training loop."""

__version__ = "0.1.0"

from .accountant import (
    PrivacyBudget,
    RdpCurve,
    calibrate_gaussian,
    compose,
    default_orders,
    gaussian_curve,
    gaussian_rdp,
    lmo_curve,
    lmo_rdp,
    lmo_rdp_paper_form,
    poisson_amplified_rdp,
    to_dp,
)
from .mgf import Degenerate, Exponential, Gamma, MixtureSpec, Uniform, log_mgf, mgf
from .sampler import GaussianParams, make_rng, sample_lmo_noise
from .search import (
    SearchGrid,
    SearchResult,
    default_grid,
    mechanism_cdf,
    pure_dp_epsilon,
    search_optimal,
    usefulness,
)

__all__ = [
    "Degenerate", "Exponential", "Gamma", "GaussianParams", "MixtureSpec", "PrivacyBudget",
    "RdpCurve", "SearchGrid", "SearchResult", "Uniform", "calibrate_gaussian", "compose",
    "default_grid", "default_orders", "gaussian_curve", "gaussian_rdp", "lmo_curve", "lmo_rdp",
    "lmo_rdp_paper_form", "log_mgf", "make_rng", "mechanism_cdf", "mgf",
    "poisson_amplified_rdp", "pure_dp_epsilon", "sample_lmo_noise", "search_optimal",
    "to_dp", "usefulness",
]

"""MCMC samplers for SANOVA, MCAR and univariate CAR models."""

from .api import (
    fit_univariate_car,
    gibbs_mcar_normal,
    gibbs_sanova_normal,
    mh_mcar_poisson,
    mh_sanova_poisson,
    sample,
    univariate_car_spec,
)
from .core import FULL, REDUCED, PosteriorDraws, RunConfig, SamplerError, chain_generators
from .diagnostics import gelman_rubin, potential_scale_reduction

__all__ = [
    "FULL",
    "REDUCED",
    "PosteriorDraws",
    "RunConfig",
    "SamplerError",
    "chain_generators",
    "fit_univariate_car",
    "gelman_rubin",
    "gibbs_mcar_normal",
    "gibbs_sanova_normal",
    "mh_mcar_poisson",
    "mh_sanova_poisson",
    "potential_scale_reduction",
    "sample",
    "univariate_car_spec",
]

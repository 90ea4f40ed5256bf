"""Reversible-jump MCMC for Jolly-Seber stopover models with mixtures over
arrival times and retention behaviour."""

from .data import DataError, ObservedData, StudyDesign
from .kernels import BACKEND
from .priors import PriorConfig, closed_priors, open_priors
from .sampler import NumericError, SamplerConfig, run_chain

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DataError", "NumericError", "ObservedData", "PriorConfig",
    "SamplerConfig", "StudyDesign", "closed_priors", "open_priors", "run_chain",
]

"""Particle marginal Metropolis-Hastings for state-space models."""

__version__ = "0.1.0"

from ._parallel import resolve_threads  # noqa: E402  (sets the threading layer first)
from .config import RunConfig, load_config, parse_config
from .diagnostics import acf, chain_summary, iact
from .estimators import ParticleFilter, PMMHSampler
from .evidence import chib_evidence, conditional_param_density, loglik_product, prior_evidence
from .exceptions import (
    ConfigError,
    DataError,
    DegeneracyError,
    PMMHError,
    StartupError,
    StationarityError,
)
from .models import (
    LgParams,
    LinearGaussian,
    StateSpaceModel,
    StochasticVolatility,
    SvParams,
    kalman_loglik,
    simulate,
)
from .io import load_observations
from .priors import Marginal, PriorSpec, ProposalSpec, log_prior
from .rng import Key, Stream
from .sampler import ChainConfig, ChainOutput, ChainState, Target, pmmh_step, propose, run_chain
from .smc import bootstrap_filter, ess, normalize_log_weights, resample, sample_trajectory

__all__ = [
    "ChainConfig", "ChainOutput", "ChainState", "ConfigError", "DataError", "DegeneracyError",
    "Key", "LgParams", "LinearGaussian", "Marginal", "PMMHError", "PMMHSampler",
    "ParticleFilter", "PriorSpec", "ProposalSpec", "RunConfig", "StartupError",
    "StateSpaceModel", "StationarityError", "StochasticVolatility", "Stream", "SvParams",
    "Target", "acf", "bootstrap_filter", "chain_summary", "chib_evidence",
    "conditional_param_density", "ess", "iact", "kalman_loglik", "load_config",
    "load_observations", "log_prior", "loglik_product", "normalize_log_weights",
    "parse_config", "pmmh_step", "prior_evidence", "propose", "resample", "resolve_threads",
    "run_chain", "sample_trajectory", "simulate",
]

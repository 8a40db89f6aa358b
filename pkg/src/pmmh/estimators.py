"""scikit-learn style wrappers around the filter and the PMMH sampler.

Both estimators take the observation series as ``fit``'s argument and expose
their results as trailing-underscore attributes; ``get_params``/``set_params``
come from :class:`sklearn.base.BaseEstimator`. ``random_state`` must be an
integer seed because all randomness flows through counter-based streams.
"""

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .diagnostics import chain_summary
from .evidence import chib_evidence
from .models import get_model
from .priors import PriorSpec, ProposalSpec
from .rng import LINEAGE, Stream, as_key
from .sampler import ChainConfig, Target, run_chain
from .smc import bootstrap_filter, sample_trajectory


def check_series(y):
    """Validate an observation series: 1-D (or a single column), finite, non-empty."""
    arr = check_array(y, ensure_2d=False, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single series, got shape {arr.shape}")
        arr = arr[:, 0]
    return np.ascontiguousarray(arr)


def check_seed(random_state):
    if random_state is None:
        return 0
    if not isinstance(random_state, numbers.Integral) or random_state < 0:
        raise ValueError(f"random_state must be a nonnegative int, got {random_state!r}")
    return int(random_state)


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit(y) first")


class ParticleFilter(BaseEstimator):
    """Bootstrap particle filter at fixed parameters.

    After ``fit(y)``: ``log_likelihood_``, ``per_step_log_z_``, ``ess_`` and
    the full ``output_`` (a :class:`pmmh.smc.FilterOutput`).
    """

    def __init__(self, model="sv", params=None, n_particles=100, scheme="systematic",
                 ess_threshold=1.0, random_state=0, threads=1):
        self.model = model
        self.params = params
        self.n_particles = n_particles
        self.scheme = scheme
        self.ess_threshold = ess_threshold
        self.random_state = random_state
        self.threads = threads

    def _run(self, y):
        model = get_model(self.model)
        params = self.params if self.params is not None else model.params_type()
        return bootstrap_filter(model, params, check_series(y), self.n_particles, self.scheme,
                                check_seed(self.random_state),
                                ess_threshold=self.ess_threshold, threads=self.threads)

    def fit(self, y, X=None):
        out = self._run(y)
        self.output_ = out
        self.log_likelihood_ = out.log_lik_hat
        self.per_step_log_z_ = out.per_step_log_z
        self.ess_ = out.ess
        self.n_timesteps_ = out.T
        return self

    def score(self, y, X=None):
        """Log-likelihood estimate for ``y`` (a fresh filter run)."""
        return self._run(y).log_lik_hat

    def sample_trajectory(self, draw=0):
        """One lineage-traced path from the fitted run; ``draw`` picks the stream."""
        _check_fitted(self, "output_")
        key = as_key(check_seed(self.random_state))
        return sample_trajectory(self.output_, Stream(key, run=int(draw), purpose=LINEAGE))


class PMMHSampler(BaseEstimator):
    """Particle marginal Metropolis-Hastings over the parameters named in ``prior``.

    ``prior`` is a :class:`PriorSpec` (model default when ``None``);
    ``proposal_sd`` is a float or a per-parameter dict of random-walk scales in
    chain coordinates (log scale for positive parameters). Parameters without
    a prior are held at ``fixed_params``.

    After ``fit(y)``: ``chain_``, ``theta_trace_``, ``acceptance_rate_``,
    ``summary_`` and ``posterior_mean_``.
    """

    def __init__(self, model="sv", n_particles=100, n_iter=1000, scheme="systematic",
                 prior=None, proposal_sd=0.05, fixed_params=None, init=None, thin=100,
                 burn_in=0.1, ess_threshold=1.0, random_state=0, threads=1):
        self.model = model
        self.n_particles = n_particles
        self.n_iter = n_iter
        self.scheme = scheme
        self.prior = prior
        self.proposal_sd = proposal_sd
        self.fixed_params = fixed_params
        self.init = init
        self.thin = thin
        self.burn_in = burn_in
        self.ess_threshold = ess_threshold
        self.random_state = random_state
        self.threads = threads

    def _target(self, y):
        model = get_model(self.model)
        prior = self.prior if self.prior is not None else PriorSpec.default(model.name)
        if isinstance(self.proposal_sd, dict):
            proposal = ProposalSpec.default(prior.names, model.log_params)
            proposal.sds.update(self.proposal_sd)
        else:
            proposal = ProposalSpec.default(prior.names, model.log_params, float(self.proposal_sd))
        return Target(model, y, prior, proposal, fixed=self.fixed_params,
                      n_particles=self.n_particles, scheme=self.scheme,
                      ess_threshold=self.ess_threshold, threads=self.threads)

    def fit(self, y, X=None, progress=None):
        y = check_series(y)
        target = self._target(y)
        cfg = ChainConfig(n_iter=self.n_iter, n_particles=self.n_particles, scheme=self.scheme,
                          seed=check_seed(self.random_state), thin=self.thin,
                          ess_threshold=self.ess_threshold, threads=self.threads, init=self.init)
        chain = run_chain(cfg, target, progress)
        self.chain_ = chain
        self.observations_ = y
        self.param_names_ = chain.param_names
        self.theta_trace_ = chain.theta_trace
        self.acceptance_rate_ = chain.acceptance_rate
        self.summary_ = chain_summary(chain, self.burn_in) if chain.n_iter else None
        b = int(np.floor(self.burn_in * chain.theta_trace.shape[0]))
        kept = chain.theta_trace[b:]
        self.posterior_mean_ = dict(zip(chain.param_names, kept.mean(axis=0)))
        return self

    def chib_evidence(self, R=10, n_particles=None, theta_star="median",
                      conditional="exact", random_state=None):
        """Chib log-evidence from the fitted chain (LG model with unknown phi only)."""
        _check_fitted(self, "chain_")
        model = get_model(self.model)
        seed = check_seed(self.random_state if random_state is None else random_state)
        return chib_evidence(self.chain_, self.observations_, model, self._target(self.observations_).prior,
                             n_particles or self.n_particles, R, seed,
                             params_fixed=self.fixed_params, burn_in=self.burn_in,
                             theta_star=theta_star, conditional=conditional,
                             scheme=self.scheme, threads=self.threads)

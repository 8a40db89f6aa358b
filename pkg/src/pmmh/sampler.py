"""Particle marginal Metropolis-Hastings over model parameters.

The chain moves in transformed coordinates (identity or log per parameter)
with a symmetric Gaussian random walk, so the acceptance ratio is just the
ratio of estimated likelihood times transformed-space prior. The incumbent's
likelihood estimate is stored and reused, never re-estimated: that is what
keeps the pseudo-marginal chain exact.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from math import inf

import numpy as np

from .exceptions import DegeneracyError, StartupError, StationarityError
from .models import get_model
from .priors import PriorSpec, ProposalSpec, log_prior
from .rng import ACCEPT, LINEAGE, PRIOR_DRAW, PROPOSE, Stream, as_key
from .smc import bootstrap_filter, sample_trajectory

log = logging.getLogger(__name__)


@dataclass
class ChainState:
    theta: np.ndarray
    log_prior: float
    log_lik_hat: float
    trajectory: np.ndarray


@dataclass
class ChainConfig:
    n_iter: int = 1000
    n_particles: int = 100
    scheme: str = "systematic"
    seed: int = 0
    thin: int = 100
    ess_threshold: float = 1.0
    threads: int = 1
    init: dict = None

    def __post_init__(self):
        if self.n_iter < 0:
            raise ValueError(f"n_iter must be nonnegative, got {self.n_iter}")
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be at least 1, got {self.n_particles}")
        if self.thin < 1:
            raise ValueError(f"thin must be at least 1, got {self.thin}")


@dataclass
class ChainOutput:
    """Traces of a PMMH run.

    Row 0 of ``theta_trace`` and ``loglik_trace`` is the initial state, so both
    have ``n_iter + 1`` rows while ``accept_flags`` has ``n_iter``.
    """

    param_names: tuple
    theta_trace: np.ndarray
    loglik_trace: np.ndarray
    accept_flags: np.ndarray
    trajectory_iters: np.ndarray
    trajectories: np.ndarray
    filter_runs: int
    config: dict = field(default_factory=dict)

    @property
    def n_iter(self):
        return self.accept_flags.shape[0]

    @property
    def acceptance_rate(self):
        return float(self.accept_flags.mean()) if self.n_iter else math.nan


class Target:
    """Everything a PMMH step needs besides the chain state.

    ``fixed`` holds values for model parameters that the prior does not cover.
    """

    def __init__(self, model, data, prior=None, proposal=None, fixed=None,
                 n_particles=100, scheme="systematic", ess_threshold=1.0, threads=1):
        self.model = get_model(model)
        self.data = np.ascontiguousarray(data, dtype=float)
        self.prior = prior if prior is not None else PriorSpec.default(self.model.name)
        self.names = self.prior.names
        unknown = set(self.names) - set(self.model.param_names)
        if unknown:
            raise ValueError(f"prior names {sorted(unknown)} are not {self.model.name} parameters")
        self.proposal = proposal if proposal is not None else ProposalSpec.default(
            self.names, self.model.log_params)
        missing = set(self.names) - set(self.proposal.sds)
        if missing:
            raise ValueError(f"proposal lacks scales for {sorted(missing)}")
        base = self.model.params_type() if fixed is None else fixed
        self.base = self.model.to_array(base)
        self._slots = [self.model.param_names.index(n) for n in self.names]
        self.n_particles = int(n_particles)
        self.scheme = scheme
        self.ess_threshold = ess_threshold
        self.threads = threads

    def full_params(self, theta):
        p = self.base.copy()
        p[self._slots] = theta
        return p

    def log_prior_u(self, u):
        """Prior log-density in transformed (chain) coordinates."""
        lp = log_prior(self.proposal.to_natural(u, self.names), self.prior)
        if lp == -inf:
            return -inf
        return lp + self.proposal.log_jacobian(u, self.names)

    def filter(self, theta, key, run):
        return bootstrap_filter(
            self.model, self.full_params(theta), self.data, self.n_particles,
            self.scheme, key, run=run, ess_threshold=self.ess_threshold,
            threads=self.threads)


def acceptance_probability(log_lik_prop, log_prior_prop, log_lik_cur, log_prior_cur):
    """``min(1, exp[(ll* + lp*) - (ll + lp)])`` for a symmetric proposal."""
    log_alpha = (log_lik_prop + log_prior_prop) - (log_lik_cur + log_prior_cur)
    if math.isnan(log_alpha):
        return 0.0
    return 1.0 if log_alpha >= 0 else math.exp(log_alpha)


def propose(theta, spec, rng, names=None):
    """Random-walk move in transformed coordinates; log-scale entries stay positive."""
    names = tuple(spec.sds) if names is None else names
    u = spec.to_unconstrained(theta, names)
    for j, name in enumerate(names):
        u[j] += spec.sds[name] * rng.standard_normal()
    return spec.to_natural(u, names)


def pmmh_step(state, target, key, iteration, counter=None):
    """One PMMH transition. Returns ``(new_state, accepted)``.

    Proposals outside the prior support are rejected before any filter run.
    A degenerate filter at the proposal counts as a zero likelihood estimate.
    """
    key = as_key(key)
    theta_new = propose(state.theta, target.proposal,
                        Stream(key, run=iteration, purpose=PROPOSE), target.names)
    u_new = target.proposal.to_unconstrained(theta_new, target.names)
    lp_new = target.log_prior_u(u_new)
    if lp_new == -inf:
        return state, False
    try:
        out = target.filter(theta_new, key, iteration)
    except StationarityError:
        return state, False
    except DegeneracyError as exc:
        if counter is not None:
            counter["filter_runs"] += 1
            counter["degenerate"] += 1
        log.warning("iteration %d: filter degenerate at proposal %s (%s); rejecting",
                    iteration, theta_new, exc)
        return state, False
    if counter is not None:
        counter["filter_runs"] += 1
    alpha = acceptance_probability(out.log_lik_hat, lp_new, state.log_lik_hat, state.log_prior)
    u = Stream(key, run=iteration, purpose=ACCEPT).uniform()
    if u < alpha:
        traj = sample_trajectory(out, Stream(key, run=iteration, purpose=LINEAGE))
        return ChainState(theta_new, lp_new, out.log_lik_hat, traj), True
    return state, False


def initial_state(target, key, init=None, counter=None):
    """Chain start: ``init`` (name -> value) if given, else one prior draw."""
    key = as_key(key)
    if init:
        missing = set(target.names) - set(init)
        if missing:
            raise StartupError(f"init lacks values for {sorted(missing)}")
        theta = np.array([float(init[n]) for n in target.names])
    else:
        s = Stream(key, run=0, purpose=PRIOR_DRAW)
        theta = np.array([m.sample(s) for m in target.prior.marginals.values()])
    try:
        lp = target.log_prior_u(target.proposal.to_unconstrained(theta, target.names))
    except ValueError as exc:
        raise StartupError(f"invalid start point {theta}: {exc}") from exc
    if lp == -inf:
        raise StartupError(f"start point {dict(zip(target.names, theta))} has zero prior density")
    try:
        out = target.filter(theta, key, 0)
    except (DegeneracyError, StationarityError) as exc:
        raise StartupError(f"initial filter failed at {theta}: {exc}") from exc
    if counter is not None:
        counter["filter_runs"] += 1
    traj = sample_trajectory(out, Stream(key, run=0, purpose=LINEAGE))
    return ChainState(theta, lp, out.log_lik_hat, traj)


def run_chain(config, target, progress=None):
    """Run ``config.n_iter`` PMMH steps and return a :class:`ChainOutput`."""
    key = as_key(config.seed)
    counter = Counter()
    state = initial_state(target, key, config.init, counter)
    M = int(config.n_iter)
    p = len(target.names)
    thetas = np.empty((M + 1, p))
    lls = np.empty(M + 1)
    flags = np.zeros(M, dtype=bool)
    thetas[0], lls[0] = state.theta, state.log_lik_hat
    traj_iters, trajs = [0], [state.trajectory]
    for i in range(1, M + 1):
        state, flags[i - 1] = pmmh_step(state, target, key, i, counter)
        thetas[i], lls[i] = state.theta, state.log_lik_hat
        if i % config.thin == 0:
            traj_iters.append(i)
            trajs.append(state.trajectory)
        if progress is not None:
            progress(i)
    return ChainOutput(
        param_names=target.names,
        theta_trace=thetas,
        loglik_trace=lls,
        accept_flags=flags,
        trajectory_iters=np.array(traj_iters),
        trajectories=np.array(trajs),
        filter_runs=counter["filter_runs"],
        config={
            "model": target.model.name,
            "n_iter": M,
            "n_particles": target.n_particles,
            "scheme": target.scheme,
            "seed": int(config.seed),
            "thin": config.thin,
            "ess_threshold": target.ess_threshold,
            "prior": {n: m.to_dict() for n, m in target.prior.marginals.items()},
            "proposal_sd": dict(target.proposal.sds),
            "fixed": dict(zip(target.model.param_names, map(float, target.base))),
        },
    )

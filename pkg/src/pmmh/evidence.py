"""Marginal likelihood estimators.

* :func:`loglik_product` - the filter's unbiased product of per-step terms.
* :func:`chib_evidence` - ``p(y) = p(theta*) p(y|theta*) / p(theta*|y)`` with the
  numerator from fresh filters at ``theta*`` and the denominator averaged over
  PMMH trajectories (LG model, single unknown ``phi``).
* :func:`prior_evidence` - average of filter estimates at prior draws.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .diagnostics import iact
from .exceptions import DegeneracyError, StationarityError
from .models import LOG_2PI, LinearGaussian, get_model
from .priors import PriorSpec, log_prior
from .rng import PRIOR_DRAW, Stream, as_key
from .smc import bootstrap_filter, loglik_sum

CHIB_DOMAIN = 0xC41B
PRIOR_DOMAIN = 0x9A10

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(512)


@dataclass
class EvidenceResult:
    log_evidence: float
    numerator_replicates: int
    theta_star: np.ndarray = None
    standard_error_proxy: float = math.nan
    log_prior_star: float = math.nan
    log_numerator: float = math.nan
    log_denominator: float = math.nan

    def to_dict(self):
        d = {
            "log_evidence": self.log_evidence,
            "numerator_replicates": self.numerator_replicates,
            "standard_error_proxy": self.standard_error_proxy,
        }
        if self.theta_star is not None:
            d.update(
                theta_star=[float(v) for v in np.atleast_1d(self.theta_star)],
                log_prior_star=self.log_prior_star,
                log_numerator=self.log_numerator,
                log_denominator=self.log_denominator,
            )
        return d


def loglik_product(per_step_log_z):
    """log of prod_t p(y_t | y_1:t-1), i.e. the sum of the per-step log terms."""
    terms = np.asarray(per_step_log_z, dtype=float)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise DegeneracyError(f"non-finite per-step term at step {bad[0]}", step=int(bad[0]))
    return loglik_sum(terms)


def log_mean_exp(values):
    """``(log mean exp(values), delta-method standard error of that log)``."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    lm = logsumexp(v) - math.log(n)
    if n < 2 or not np.isfinite(lm):
        return float(lm), math.nan
    r = np.exp(v - lm)
    return float(lm), float(np.std(r, ddof=1) / math.sqrt(n))


def _phi_prior(prior):
    try:
        return prior.marginals["phi"]
    except KeyError:
        raise ValueError("prior must carry a marginal for phi") from None


def conditional_param_density(phi_star, states, prior, params_fixed):
    """Conjugate-regression log-density of ``phi | x`` at ``phi_star``.

    Uses the (untruncated) Gaussian ``N(loc, scale^2)`` of the phi prior and
    the transitions ``x_t | x_{t-1}`` for ``t >= 2``:
    ``v = (1/s0^2 + sum x_{t-1}^2 / sx^2)^-1``,
    ``m = v (m0/s0^2 + sum x_t x_{t-1} / sx^2)``.
    The stationary law of ``x_1`` and the prior truncation are ignored; see
    :func:`exact_conditional_density` for the version that keeps both.
    """
    x = np.asarray(states, dtype=float)
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 states for the phi conditional, got {x.shape[0]}")
    marg = _phi_prior(prior)
    m0, s0 = marg.loc, marg.scale
    sx = LinearGaussian().to_array(params_fixed)[1]
    prec = 1.0 / s0**2 + np.dot(x[:-1], x[:-1]) / sx**2
    v = 1.0 / prec
    m = v * (m0 / s0**2 + np.dot(x[1:], x[:-1]) / sx**2)
    z = phi_star - m
    return float(-0.5 * (LOG_2PI + math.log(v) + z * z / v))


def _lg_path_logpdf(phi, x, sx):
    """log p(x_1:T | phi) for the LG state process, broadcasting over ``phi``."""
    phi = np.asarray(phi, dtype=float)
    v1 = sx * sx / (1.0 - phi * phi)
    out = -0.5 * (LOG_2PI + np.log(v1) + x[0] ** 2 / v1)
    e = x[1:, None] - phi.reshape(1, -1) * x[:-1, None]
    out = out + (-0.5 * (LOG_2PI + 2 * math.log(sx)) * (x.shape[0] - 1)
                 - 0.5 * np.sum(e * e, axis=0).reshape(phi.shape) / sx**2)
    return out


def exact_conditional_density(phi_star, states, prior, params_fixed):
    """Exact log p(phi | x) at ``phi_star`` under the full prior.

    Includes ``x_1``'s stationary density and the prior's support; the
    normalizer is a 512-node Gauss-Legendre rule over that support (which must
    lie inside (-1, 1)).
    """
    x = np.asarray(states, dtype=float)
    marg = _phi_prior(prior)
    lo, hi = marg.support
    lo, hi = max(lo, -1.0), min(hi, 1.0)
    sx = LinearGaussian().to_array(params_fixed)[1]
    nodes = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
    lw = np.log(0.5 * (hi - lo) * _GL_WEIGHTS)
    lp_nodes = np.array([marg.logpdf(g) for g in nodes])
    log_norm = logsumexp(lw + lp_nodes + _lg_path_logpdf(nodes, x, sx))
    if not lo < phi_star < hi:
        return -math.inf
    return float(marg.logpdf(phi_star) + _lg_path_logpdf(np.array([phi_star]), x, sx)[0] - log_norm)


def _burn_rows(n_rows, burn_in):
    if not 0.0 <= burn_in < 1.0:
        raise ValueError(f"burn_in must lie in [0, 1), got {burn_in}")
    return int(math.floor(burn_in * n_rows))


def select_theta_star(theta_trace, how="median"):
    if how == "median":
        return np.median(theta_trace, axis=0)
    if how == "mean":
        return np.mean(theta_trace, axis=0)
    raise ValueError(f"theta_star must be 'median', 'mean' or explicit values, got {how!r}")


def numerator_replicates(model, params, data, N, R, key, scheme="systematic", threads=1):
    """Log-likelihood estimates from ``R`` independent filters at ``params``."""
    lls, failures = [], []
    for r in range(int(R)):
        try:
            out = bootstrap_filter(model, params, data, N, scheme, key, run=r, threads=threads)
        except DegeneracyError as exc:
            failures.append((r, exc.step))
            continue
        lls.append(out.log_lik_hat)
    if failures:
        raise DegeneracyError(
            "degenerate numerator replicates (replicate, step): "
            + ", ".join(f"({r}, {s})" for r, s in failures))
    return np.array(lls)


def chib_evidence(chain, data, model="lg", prior=None, N=100, R=10, seed=0, *,
                  params_fixed=None, burn_in=0.1, theta_star="median",
                  conditional="exact", scheme="systematic", threads=1):
    """Chib's marginal-likelihood estimate from a PMMH run on the LG model.

    ``theta_star`` is ``"median"`` (default), ``"mean"`` or an explicit value;
    the highest-likelihood draw is deliberately not offered. The numerator
    averages ``R`` filter estimates on the natural scale; the denominator
    averages ``p(phi* | x_i)`` over the retained post-burn-in trajectories.
    ``conditional`` is ``"exact"`` or ``"conjugate"``.
    """
    model = get_model(model)
    if model.name != "lg" or tuple(chain.param_names) != ("phi",):
        raise ValueError("chib_evidence is implemented for the LG model with phi as the only unknown")
    prior = prior if prior is not None else PriorSpec.default("lg")
    if params_fixed is None:
        params_fixed = chain.config.get("fixed") or model.params_type()
    base = model.to_array(params_fixed)

    n_rows = chain.theta_trace.shape[0]
    b = _burn_rows(n_rows, burn_in)
    thetas = chain.theta_trace[b:]
    keep = chain.trajectory_iters >= b
    trajs = chain.trajectories[keep]
    if thetas.shape[0] == 0 or trajs.shape[0] == 0:
        raise ValueError("no retained post-burn-in samples/trajectories for the Chib denominator")

    if isinstance(theta_star, str):
        star = select_theta_star(thetas, theta_star)
    else:
        star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    phi = float(star[0])
    lp_star = log_prior(star, prior)
    if lp_star == -math.inf:
        raise ValueError(f"theta* = {phi} has zero prior density")

    params = base.copy()
    params[0] = phi
    key = as_key(seed).child(CHIB_DOMAIN)
    lls = numerator_replicates(model, params, data, N, R, key, scheme, threads)
    num, se_num = log_mean_exp(lls)

    cond = {"exact": exact_conditional_density, "conjugate": conditional_param_density}[conditional]
    dens = np.array([cond(phi, x, prior, base) for x in trajs])
    den, se_den = log_mean_exp(dens)
    # trajectories come from a correlated chain: scale the iid SE by sqrt(IACT)
    ratios = np.exp(dens - den)
    if ratios.shape[0] > 2 and np.ptp(ratios) > 0:
        se_den *= math.sqrt(max(iact(ratios).value, 1.0))

    se = math.sqrt(np.nansum([se_num**2, se_den**2]))
    return EvidenceResult(
        log_evidence=float(lp_star + num - den),
        numerator_replicates=int(R),
        theta_star=star,
        standard_error_proxy=se,
        log_prior_star=float(lp_star),
        log_numerator=float(num),
        log_denominator=float(den),
    )


def prior_evidence(model, data, prior=None, K=1000, N=100, seed=0, *,
                   params_fixed=None, scheme="systematic", threads=1):
    """log of the average filter estimate over ``K`` prior draws.

    A degenerate filter counts as a zero estimate; all ``K`` degenerate is an
    error.
    """
    model = get_model(model)
    prior = prior if prior is not None else PriorSpec.default(model.name)
    K = int(K)
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    base = model.to_array(params_fixed if params_fixed is not None else model.params_type())
    slots = [model.param_names.index(n) for n in prior.names]
    key = as_key(seed).child(PRIOR_DOMAIN)
    lls = np.full(K, -math.inf)
    for k in range(K):
        s = Stream(key, run=k, purpose=PRIOR_DRAW)
        params = base.copy()
        params[slots] = [m.sample(s) for m in prior.marginals.values()]
        try:
            lls[k] = bootstrap_filter(model, params, data, N, scheme, key, run=k,
                                      threads=threads).log_lik_hat
        except (DegeneracyError, StationarityError):
            pass
    if not np.any(np.isfinite(lls)):
        raise DegeneracyError(f"all {K} prior-draw filters were degenerate")
    le, se = log_mean_exp(lls)
    return EvidenceResult(log_evidence=le, numerator_replicates=K, standard_error_proxy=se)


def quadrature_log_evidence(data, prior=None, params_fixed=None, n_grid=2001):
    """log of the integral of the exact Kalman likelihood times the phi prior (LG)."""
    from .models import kalman_loglik

    prior = prior if prior is not None else PriorSpec.default("lg")
    marg = _phi_prior(prior)
    base = LinearGaussian().to_array(params_fixed if params_fixed is not None else (0.0, 1.0, 0.5))
    lo, hi = marg.support
    lo, hi = max(lo, -1.0), min(hi, 1.0)
    grid = np.linspace(lo, hi, n_grid + 2)[1:-1]
    h = grid[1] - grid[0]
    vals = np.array([kalman_loglik((g, base[1], base[2]), data) + marg.logpdf(g) for g in grid])
    return float(logsumexp(vals) + math.log(h)), grid, vals

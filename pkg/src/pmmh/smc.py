"""Bootstrap particle filter with pluggable resampling and lineage sampling.

Weights live in log space end to end. Every particle draw comes from its own
counter-based stream ``(particle, step, run)``, and every cross-particle
reduction runs serially in index order, so the output is bit-identical for any
thread count.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ._parallel import resolve_threads, thread_count
from .exceptions import DegeneracyError
from .models import get_model
from .rng import FILTER, RESAMPLE, as_key, set_stream, uniform

SCHEMES = ("multinomial", "residual", "systematic")
_SCHEME_CODE = {name: i for i, name in enumerate(SCHEMES)}


@dataclass
class ParticleSystem:
    """Particle values, log-weights and ancestor indices, each ``T x N``.

    ``ancestors[t, i]`` indexes the parent of particle ``i`` in row ``t - 1``;
    row 0 is the identity.
    """

    states: np.ndarray
    log_weights: np.ndarray
    ancestors: np.ndarray

    @property
    def shape(self):
        return self.states.shape


@dataclass
class FilterOutput:
    per_step_log_z: np.ndarray
    log_lik_hat: float
    system: ParticleSystem
    ess: np.ndarray
    resampled: np.ndarray

    @property
    def T(self):
        return self.per_step_log_z.shape[0]

    @property
    def n_particles(self):
        return self.system.states.shape[1]


# --- compiled kernels ------------------------------------------------------

@njit(cache=True)
def _normalize(logw, out):
    """Write normalized weights into ``out``; return (log_mean, ok)."""
    n = logw.shape[0]
    top = -np.inf
    for i in range(n):
        v = logw[i]
        if np.isnan(v) or v == np.inf:
            return np.nan, False
        if v > top:
            top = v
    if top == -np.inf:
        return np.nan, False
    total = 0.0
    for i in range(n):
        e = np.exp(logw[i] - top)
        out[i] = e
        total += e
    for i in range(n):
        out[i] /= total
    return top + np.log(total) - np.log(n), True


@njit(cache=True)
def _ess(w):
    s = 0.0
    for i in range(w.shape[0]):
        s += w[i] * w[i]
    return 1.0 / s


@njit(cache=True)
def _cumulative(w):
    cw = np.empty(w.shape[0])
    acc = 0.0
    for i in range(w.shape[0]):
        acc += w[i]
        cw[i] = acc
    top = cw[-1]
    for i in range(w.shape[0]):
        cw[i] /= top
    return cw


@njit(cache=True)
def _find(cw, u):
    # first index j with cw[j] > u
    lo, hi = 0, cw.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cw[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _multinomial(w, n, stream, out, start):
    cw = _cumulative(w)
    for k in range(n):
        out[start + k] = _find(cw, uniform(stream))


@njit(cache=True)
def _systematic(w, n, stream, out):
    cw = _cumulative(w)
    u = uniform(stream)
    j = 0
    last = cw.shape[0] - 1
    for k in range(n):
        pos = (u + k) / n
        while cw[j] <= pos and j < last:
            j += 1
        out[k] = j


@njit(cache=True)
def _residual(w, n, stream, out):
    m = w.shape[0]
    resid = np.empty(m)
    k = 0
    for i in range(m):
        nw = n * w[i]
        c = int(np.floor(nw))
        for _ in range(c):
            out[k] = i
            k += 1
        resid[i] = nw - c
    rest = n - k
    if rest > 0:
        for i in range(m):
            if resid[i] < 0.0:
                resid[i] = 0.0
        _multinomial(resid, rest, stream, out, k)


@njit(cache=True)
def _resample(w, n, scheme, stream, out):
    if scheme == 0:
        _multinomial(w, n, stream, out, 0)
    elif scheme == 1:
        _residual(w, n, stream, out)
    else:
        _systematic(w, n, stream, out)


def _filter_body(initial, transition, log_obs, p, y, N, scheme, threshold, k0, k1, run):
    T = y.shape[0]
    states = np.empty((T, N))
    logw = np.empty((T, N))
    anc = np.empty((T, N), dtype=np.int64)
    log_z = np.full(T, np.nan)
    ess = np.full(T, np.nan)
    resampled = np.zeros(T, dtype=np.bool_)
    w = np.empty(N)
    carried = np.zeros(N)
    streams = np.empty((N, 6), dtype=np.uint64)
    rs = np.empty(6, dtype=np.uint64)
    log_n = np.log(N)

    for i in range(N):
        anc[0, i] = i
    for i in prange(N):
        set_stream(streams[i], k0, k1, i, 0, run, FILTER)
        x = initial(p, streams[i])
        states[0, i] = x
        logw[0, i] = log_obs(y[0], x, p)
    lm, ok = _normalize(logw[0], w)
    if not ok:
        return states, logw, anc, log_z, ess, resampled, 0
    log_z[0] = lm
    ess[0] = _ess(w)

    for t in range(1, T):
        if threshold >= 1.0 or ess[t - 1] < threshold * N:
            set_stream(rs, k0, k1, 0, t, run, RESAMPLE)
            _resample(w, N, scheme, rs, anc[t])
            resampled[t] = True
            for i in range(N):
                carried[i] = 0.0
        else:
            for i in range(N):
                anc[t, i] = i
                carried[i] = np.log(w[i]) + log_n
        for i in prange(N):
            set_stream(streams[i], k0, k1, i, t, run, FILTER)
            x = transition(states[t - 1, anc[t, i]], p, streams[i])
            states[t, i] = x
            logw[t, i] = carried[i] + log_obs(y[t], x, p)
        lm, ok = _normalize(logw[t], w)
        if not ok:
            return states, logw, anc, log_z, ess, resampled, t
        log_z[t] = lm
        ess[t] = _ess(w)
    return states, logw, anc, log_z, ess, resampled, -1


_filter_serial = njit(_filter_body)
_filter_parallel = njit(parallel=True)(_filter_body)


# --- public operations -----------------------------------------------------

def normalize_log_weights(logw, step=None):
    """Normalize log-weights stably.

    Returns ``(weights, log_mean)`` where ``log_mean`` is the log of the
    arithmetic mean of ``exp(logw)``. Raises :class:`DegeneracyError` when
    every entry is ``-inf`` or any entry is NaN / ``+inf``.
    """
    logw = np.ascontiguousarray(logw, dtype=float)
    if logw.ndim != 1 or logw.shape[0] < 1:
        raise ValueError("logw must be a non-empty 1-D sequence")
    w = np.empty_like(logw)
    log_mean, ok = _normalize(logw, w)
    if not ok:
        where = "" if step is None else f" at step {step}"
        raise DegeneracyError(f"weight degeneracy{where}: no finite log-weight", step=step)
    return w, float(log_mean)


def _check_weights(weights):
    w = np.ascontiguousarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ValueError("weights must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (within 1e-9), got {w.sum()!r}")
    return w


def resample(weights, scheme, rng, n=None):
    """Draw ``n`` (default ``len(weights)``) ancestor indices.

    ``rng`` is a :class:`pmmh.rng.Stream`. All schemes give
    ``E[count(i)] = n * w_i``.
    """
    w = _check_weights(weights)
    n = w.shape[0] if n is None else int(n)
    out = np.empty(n, dtype=np.int64)
    _resample(w, n, scheme_code(scheme), rng.state, out)
    return out


def ess(weights):
    """Effective sample size ``1 / sum(w_i^2)`` of normalized weights."""
    return float(_ess(_check_weights(weights)))


def scheme_code(scheme):
    try:
        return _SCHEME_CODE[scheme]
    except KeyError:
        raise ValueError(f"unknown resampling scheme {scheme!r}; choose from {SCHEMES}") from None


def _check_series(y):
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ValueError("observations must be a non-empty 1-D series")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    return y


def bootstrap_filter(model, params, y, N, scheme="systematic", seed=0, *,
                     run=0, ess_threshold=1.0, threads=1):
    """Run a bootstrap particle filter and return a :class:`FilterOutput`.

    ``exp(log_lik_hat)`` is an unbiased estimate of ``p(y_1:T | params)``.
    ``seed`` may be an int or a :class:`pmmh.rng.Key`; ``run`` selects an
    independent block of streams under that key (the PMMH iteration index,
    a replicate number, ...). Resampling happens at step ``t`` whenever
    ``ess_threshold >= 1`` or ``ESS_{t-1} < ess_threshold * N``.
    """
    model = get_model(model)
    p = model.check_stationary(params)
    y = _check_series(y)
    N = int(N)
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    code = scheme_code(scheme)
    k0, k1 = as_key(seed).words
    threads = resolve_threads(threads)
    args = (model.initial, model.transition, model.log_obs, p, y, N, code,
            float(ess_threshold), k0, k1, int(run))
    if threads == 1:
        res = _filter_serial(*args)
    else:
        with thread_count(threads):
            res = _filter_parallel(*args)
    states, logw, anc, log_z, ess_t, resampled, fail = res
    if fail >= 0:
        raise DegeneracyError(
            f"weight degeneracy at step {fail}: every particle has zero "
            f"(or non-finite) observation density", step=int(fail))
    return FilterOutput(
        per_step_log_z=log_z,
        log_lik_hat=loglik_sum(log_z),
        system=ParticleSystem(states, logw, anc),
        ess=ess_t,
        resampled=resampled,
    )


def loglik_sum(terms):
    return math.fsum(terms)


def sample_trajectory(out, rng):
    """Draw one path ``x_1:T`` by picking a final particle and tracing its ancestry."""
    system = out.system
    w, _ = normalize_log_weights(system.log_weights[-1], step=out.T - 1)
    k = int(_find(_cumulative(w), rng.uniform()))
    return _trace(system.states, system.ancestors, k)


@njit(cache=True)
def _trace(states, anc, k):
    T = states.shape[0]
    path = np.empty(T)
    for t in range(T - 1, -1, -1):
        path[t] = states[t, k]
        k = anc[t, k]
    return path


def lineage_indices(ancestors, k):
    """Particle index at each time step along the lineage ending at ``k``."""
    T = ancestors.shape[0]
    idx = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        idx[t] = k
        k = ancestors[t, k]
    return idx

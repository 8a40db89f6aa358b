"""State-space models: the pluggable interface plus the SV and LG models.

A model is three compiled kernels acting on one particle at a time::

    initial(params, stream) -> x1
    transition(x_prev, params, stream) -> x_t
    log_obs(y, x, params) -> log p(y | x)

plus ``obs_sample`` for simulation. To add a model, subclass
:class:`StateSpaceModel` and supply those ``@njit`` functions; the filter and
the sampler never look inside them.
"""

from dataclasses import astuple, dataclass, fields
from math import log, pi

import numpy as np
from numba import njit

from .exceptions import StationarityError
from .rng import SIMULATE, Key, as_key, set_stream, std_normal

LOG_2PI = log(2.0 * pi)


@dataclass(frozen=True)
class SvParams:
    mu: float = 1.0
    rho: float = 0.9
    sigma: float = 0.5

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class LgParams:
    phi: float = 0.8
    sigma_x: float = 1.0
    sigma_y: float = 0.5

    def __post_init__(self):
        if not self.sigma_x >= 0.0:
            raise ValueError(f"sigma_x must be nonnegative, got {self.sigma_x}")
        if not self.sigma_y > 0.0:
            raise ValueError(f"sigma_y must be positive, got {self.sigma_y}")


# --- stochastic volatility -------------------------------------------------

@njit(cache=True)
def _sv_initial(p, stream):
    mu, rho, sigma = p[0], p[1], p[2]
    return mu + sigma / np.sqrt(1.0 - rho * rho) * std_normal(stream)


@njit(cache=True)
def _sv_transition(x, p, stream):
    mu, rho, sigma = p[0], p[1], p[2]
    return mu + rho * (x - mu) + sigma * std_normal(stream)


@njit(cache=True)
def _sv_log_obs(y, x, p):
    return -0.5 * (LOG_2PI + x + y * y * np.exp(-x))


@njit(cache=True)
def _sv_obs_sample(x, p, stream):
    return np.exp(0.5 * x) * std_normal(stream)


# --- linear Gaussian -------------------------------------------------------

@njit(cache=True)
def _lg_initial(p, stream):
    phi, sx = p[0], p[1]
    return sx / np.sqrt(1.0 - phi * phi) * std_normal(stream)


@njit(cache=True)
def _lg_transition(x, p, stream):
    return p[0] * x + p[1] * std_normal(stream)


@njit(cache=True)
def _lg_log_obs(y, x, p):
    sy = p[2]
    z = (y - x) / sy
    return -0.5 * (LOG_2PI + z * z) - np.log(sy)


@njit(cache=True)
def _lg_obs_sample(x, p, stream):
    return x + p[2] * std_normal(stream)


@njit
def _simulate(initial, transition, obs_sample, p, T, k0, k1):
    states = np.empty(T)
    obs = np.empty(T)
    s = np.empty(6, dtype=np.uint64)
    for t in range(T):
        set_stream(s, k0, k1, 0, t, 0, SIMULATE)
        if t == 0:
            states[t] = initial(p, s)
        else:
            states[t] = transition(states[t - 1], p, s)
        set_stream(s, k0, k1, 1, t, 0, SIMULATE)
        obs[t] = obs_sample(states[t], p, s)
    return states, obs


class StateSpaceModel:
    """Base class binding compiled kernels to a parameter dataclass.

    Subclasses set ``name``, ``params_type``, ``stationary_param`` (the AR
    coefficient needing ``|.| < 1``, or ``None``) and the four kernels.
    """

    name = None
    params_type = None
    stationary_param = None
    log_params = ()

    initial = None
    transition = None
    log_obs = None
    obs_sample = None

    @property
    def param_names(self):
        return tuple(f.name for f in fields(self.params_type))

    def to_array(self, params):
        """Coerce a params dataclass, mapping or sequence to a float array."""
        if isinstance(params, self.params_type):
            arr = np.array(astuple(params), dtype=float)
        elif isinstance(params, dict):
            arr = np.array(astuple(self.params_type(**params)), dtype=float)
        else:
            arr = np.asarray(params, dtype=float).ravel()
            if arr.shape != (len(self.param_names),):
                raise ValueError(
                    f"{self.name} expects {len(self.param_names)} parameters "
                    f"{self.param_names}, got shape {arr.shape}"
                )
            self.params_type(*arr)
        return arr

    def to_params(self, arr):
        return self.params_type(*(float(v) for v in arr))

    def check_stationary(self, params):
        arr = self.to_array(params)
        if self.stationary_param is not None:
            j = self.param_names.index(self.stationary_param)
            if not abs(arr[j]) < 1.0:
                raise StationarityError(
                    f"{self.name} model needs |{self.stationary_param}| < 1 for its "
                    f"stationary initial law, got {self.stationary_param}={arr[j]!r}"
                )
        return arr

    # Python-level entry points; ``rng`` is a :class:`pmmh.rng.Stream`.
    def initial_sample(self, params, rng):
        return self.initial(self.check_stationary(params), rng.state)

    def transition_sample(self, x_prev, params, rng):
        return self.transition(float(x_prev), self.to_array(params), rng.state)

    def log_obs_density(self, y, x, params=None):
        arr = self.to_array(params if params is not None else self.params_type())
        return self.log_obs(float(y), float(x), arr)

    def __repr__(self):
        return f"{type(self).__name__}()"


class StochasticVolatility(StateSpaceModel):
    """y_t | x_t ~ N(0, exp(x_t)),  x_t = mu + rho (x_{t-1} - mu) + sigma eps_t."""

    name = "sv"
    params_type = SvParams
    stationary_param = "rho"
    log_params = ("sigma",)

    initial = staticmethod(_sv_initial)
    transition = staticmethod(_sv_transition)
    log_obs = staticmethod(_sv_log_obs)
    obs_sample = staticmethod(_sv_obs_sample)


class LinearGaussian(StateSpaceModel):
    """x_t = phi x_{t-1} + sigma_x eps_t,  y_t = x_t + sigma_y eta_t."""

    name = "lg"
    params_type = LgParams
    stationary_param = "phi"
    log_params = ("sigma_x", "sigma_y")

    initial = staticmethod(_lg_initial)
    transition = staticmethod(_lg_transition)
    log_obs = staticmethod(_lg_log_obs)
    obs_sample = staticmethod(_lg_obs_sample)


MODELS = {"sv": StochasticVolatility, "lg": LinearGaussian}


def get_model(model):
    if isinstance(model, StateSpaceModel):
        return model
    try:
        return MODELS[model]()
    except KeyError:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}") from None


def sv_transition_sample(x_prev, params, rng):
    return StochasticVolatility().transition_sample(x_prev, params, rng)


def sv_log_obs_density(y, x):
    """-(log 2pi + x + y^2 e^-x) / 2; vectorises over numpy inputs."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    out = -0.5 * (LOG_2PI + x + y * y * np.exp(-x))
    return float(out) if out.ndim == 0 else out


def sv_initial_sample(params, rng):
    return StochasticVolatility().initial_sample(params, rng)


def simulate(model, params, T, seed):
    """Draw ``(states, observations)`` of length ``T``; deterministic in ``seed``."""
    model = get_model(model)
    T = int(T)
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    p = model.check_stationary(params)
    key = as_key(seed).child(SIMULATE)
    return _simulate(model.initial, model.transition, model.obs_sample, p, T, *key.words)


def kalman_loglik(params, y):
    """Exact log p(y_1:T) for the LG model by prediction-error decomposition."""
    model = LinearGaussian()
    phi, sx, sy = model.check_stationary(params)
    y = np.asarray(y, dtype=float)
    m_pred = 0.0
    P_pred = sx * sx / (1.0 - phi * phi)
    r = sy * sy
    ll = 0.0
    for yt in y:
        S = P_pred + r
        e = yt - m_pred
        ll -= 0.5 * (LOG_2PI + log(S) + e * e / S)
        K = P_pred / S
        m = m_pred + K * e
        P = (1.0 - K) * P_pred
        m_pred = phi * m
        P_pred = phi * phi * P + sx * sx
    return ll


__all__ = [
    "Key",
    "LgParams",
    "LinearGaussian",
    "StateSpaceModel",
    "StochasticVolatility",
    "SvParams",
    "get_model",
    "kalman_loglik",
    "simulate",
    "sv_initial_sample",
    "sv_log_obs_density",
    "sv_transition_sample",
]

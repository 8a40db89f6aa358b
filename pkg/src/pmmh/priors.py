"""Marginal priors and random-walk proposal specs."""

from dataclasses import dataclass, field
from math import exp, inf, isfinite, log, pi, sqrt

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

_HALF_LOG_2PI = 0.5 * log(2.0 * pi)
DISTS = ("normal", "uniform", "lognormal", "truncnormal")


@dataclass(frozen=True)
class Marginal:
    """One-dimensional prior.

    ``normal(loc, scale)``, ``uniform(low, high)``, ``lognormal(loc, scale)``
    (``loc``/``scale`` of the log) and ``truncnormal(loc, scale, low, high)``.
    """

    dist: str
    loc: float = 0.0
    scale: float = 1.0
    low: float = -inf
    high: float = inf

    def __post_init__(self):
        if self.dist not in DISTS:
            raise ValueError(f"unknown prior family {self.dist!r}; choose from {DISTS}")
        if self.dist != "uniform" and not self.scale > 0:
            raise ValueError(f"prior scale must be positive, got {self.scale}")
        if self.dist in ("uniform", "truncnormal") and not self.low < self.high:
            raise ValueError(f"prior needs low < high, got ({self.low}, {self.high})")
        if self.dist == "uniform" and not (isfinite(self.low) and isfinite(self.high)):
            raise ValueError("uniform prior needs finite bounds")

    @classmethod
    def normal(cls, loc=0.0, scale=1.0):
        return cls("normal", loc=loc, scale=scale)

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low=low, high=high)

    @classmethod
    def lognormal(cls, loc=0.0, scale=1.0):
        return cls("lognormal", loc=loc, scale=scale)

    @classmethod
    def truncnormal(cls, loc=0.0, scale=1.0, low=-1.0, high=1.0):
        return cls("truncnormal", loc=loc, scale=scale, low=low, high=high)

    @property
    def support(self):
        if self.dist == "normal":
            return -inf, inf
        if self.dist == "lognormal":
            return 0.0, inf
        return self.low, self.high

    def logpdf(self, x):
        x = float(x)
        if self.dist == "normal":
            z = (x - self.loc) / self.scale
            return -0.5 * z * z - _HALF_LOG_2PI - log(self.scale)
        if self.dist == "uniform":
            return -log(self.high - self.low) if self.low < x < self.high else -inf
        if self.dist == "lognormal":
            if not x > 0.0:
                return -inf
            z = (log(x) - self.loc) / self.scale
            return -0.5 * z * z - _HALF_LOG_2PI - log(self.scale) - log(x)
        if not self.low < x < self.high:
            return -inf
        z = (x - self.loc) / self.scale
        return -0.5 * z * z - _HALF_LOG_2PI - log(self.scale) - self._log_mass()

    def _log_mass(self):
        a = (self.low - self.loc) / self.scale
        b = (self.high - self.loc) / self.scale
        # log(Phi(b) - Phi(a)) without cancellation in either tail
        if a > 0:
            a, b = -b, -a
        return log_ndtr(b) + np.log1p(-exp(log_ndtr(a) - log_ndtr(b)))

    def sample(self, stream):
        """Draw one value using a :class:`pmmh.rng.Stream`."""
        if self.dist == "normal":
            return self.loc + self.scale * stream.standard_normal()
        if self.dist == "uniform":
            return self.low + (self.high - self.low) * stream.uniform()
        if self.dist == "lognormal":
            return exp(self.loc + self.scale * stream.standard_normal())
        pa = ndtr((self.low - self.loc) / self.scale)
        pb = ndtr((self.high - self.loc) / self.scale)
        u = pa + (pb - pa) * stream.uniform()
        return float(np.clip(self.loc + self.scale * ndtri(u), self.low, self.high))

    def mean_var(self):
        """Analytic mean and variance (used by prior-recovery checks)."""
        m, s = self.loc, self.scale
        if self.dist == "normal":
            return m, s * s
        if self.dist == "uniform":
            return 0.5 * (self.low + self.high), (self.high - self.low) ** 2 / 12.0
        if self.dist == "lognormal":
            return exp(m + s * s / 2), (exp(s * s) - 1) * exp(2 * m + s * s)
        a, b = (self.low - m) / s, (self.high - m) / s
        Z = ndtr(b) - ndtr(a)
        pa, pb = np.exp(-0.5 * a * a) / sqrt(2 * pi), np.exp(-0.5 * b * b) / sqrt(2 * pi)
        mean = m + s * (pa - pb) / Z
        var = s * s * (1 + (a * pa - b * pb) / Z - ((pa - pb) / Z) ** 2)
        return float(mean), float(var)

    def to_dict(self):
        d = {"dist": self.dist}
        if self.dist in ("normal", "lognormal", "truncnormal"):
            d.update(loc=self.loc, scale=self.scale)
        if self.dist in ("uniform", "truncnormal"):
            d.update(low=self.low, high=self.high)
        return d


DEFAULT_PRIORS = {
    "sv": {
        "mu": Marginal.normal(0.0, 10.0),
        "rho": Marginal.uniform(-1.0, 1.0),
        "sigma": Marginal.lognormal(0.0, 2.0),
    },
    "lg": {
        "phi": Marginal.truncnormal(0.0, 1.0, -1.0, 1.0),
    },
}


@dataclass
class PriorSpec:
    """Independent marginal priors over the free parameters, in chain order."""

    marginals: dict

    @classmethod
    def default(cls, model_name):
        return cls(dict(DEFAULT_PRIORS[model_name]))

    @property
    def names(self):
        return tuple(self.marginals)

    def __len__(self):
        return len(self.marginals)


def log_prior(theta, prior):
    """Sum of marginal log-densities at natural-scale ``theta``; ``-inf`` off support."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape[0] != len(prior):
        raise ValueError(f"theta has {theta.shape[0]} entries, prior has {len(prior)}")
    total = 0.0
    for x, marg in zip(theta, prior.marginals.values()):
        lp = marg.logpdf(x)
        if lp == -inf:
            return -inf
        total += lp
    return total


@dataclass
class ProposalSpec:
    """Gaussian random-walk scales per free parameter, in transformed coordinates.

    ``transforms[name]`` is ``"identity"`` or ``"log"``.
    """

    sds: dict
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, sd in self.sds.items():
            if not sd >= 0:
                raise ValueError(f"proposal sd for {name} must be nonnegative, got {sd}")
            t = self.transforms.setdefault(name, "identity")
            if t not in ("identity", "log"):
                raise ValueError(f"unknown transform {t!r} for {name}")

    @classmethod
    def default(cls, names, log_params=(), sd=0.05):
        return cls({n: sd for n in names}, {n: "log" if n in log_params else "identity" for n in names})

    def to_unconstrained(self, theta, names):
        u = np.array(theta, dtype=float)
        for j, name in enumerate(names):
            if self.transforms[name] == "log":
                if not u[j] > 0:
                    raise ValueError(f"{name} must be positive for a log-scale move, got {u[j]}")
                u[j] = log(u[j])
        return u

    def to_natural(self, u, names):
        theta = np.array(u, dtype=float)
        for j, name in enumerate(names):
            if self.transforms[name] == "log":
                theta[j] = exp(theta[j])
        return theta

    def log_jacobian(self, u, names):
        """log |d theta / d u|: ``u`` for each log-transformed coordinate."""
        return sum(float(u[j]) for j, n in enumerate(names) if self.transforms[n] == "log")

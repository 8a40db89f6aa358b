"""Post-hoc chain diagnostics: ACF, integrated autocorrelation time, summaries."""

import math
from dataclasses import dataclass

import numpy as np

IACT_FLOOR = 1e-3


@dataclass
class AcfResult:
    lags: np.ndarray
    values: np.ndarray


@dataclass
class IactResult:
    value: float
    cutoff: int
    truncated: bool
    floored: bool

    def __float__(self):
        return self.value


def _check_series(series, max_lag):
    z = np.asarray(series, dtype=float)
    if z.ndim != 1:
        raise ValueError("series must be one-dimensional")
    max_lag = int(max_lag)
    if max_lag < 1:
        raise ValueError(f"max_lag must be at least 1, got {max_lag}")
    if max_lag >= z.shape[0]:
        raise ValueError(f"max_lag ({max_lag}) must be smaller than the series length ({z.shape[0]})")
    d = z - z.mean()
    ss = float(np.dot(d, d))
    if not ss > 0.0 or not math.isfinite(ss):
        raise ValueError("degenerate series: zero (or non-finite) variance")
    return d, ss, max_lag


def acf(series, max_lag):
    """Sample autocorrelation with the biased (full-length) normalization."""
    d, ss, max_lag = _check_series(series, max_lag)
    n = d.shape[0]
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    cov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    vals = cov / ss
    vals[0] = 1.0
    return AcfResult(lags=np.arange(max_lag + 1), values=np.clip(vals, -1.0, 1.0))


def iact(series, max_lag=None):
    """``1 + 2 sum_{k=1}^K acf(k)`` with ``K`` the first lag whose acf is negative
    (that lag included), or ``max_lag`` if none is.

    Values below ``IACT_FLOOR`` are floored and flagged.
    """
    if max_lag is None:
        max_lag = min(len(series) - 1, 1000)
    rho = acf(series, max_lag).values
    neg = np.flatnonzero(rho[1:] < 0)
    truncated = neg.size > 0
    cutoff = int(neg[0]) + 1 if truncated else max_lag
    value = 1.0 + 2.0 * float(np.sum(rho[1 : cutoff + 1]))
    floored = value < IACT_FLOOR
    return IactResult(max(value, IACT_FLOOR), cutoff, truncated, floored)


def max_rejection_run(accept_flags):
    longest = run = 0
    for a in np.asarray(accept_flags, dtype=bool):
        run = 0 if a else run + 1
        longest = max(longest, run)
    return longest


def histogram_counts(values, bins=40, range_=None):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=range_)
    return counts, edges


def burn_in_rows(n_rows, burn_in_fraction):
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError(f"burn_in_fraction must lie in [0, 1), got {burn_in_fraction}")
    return int(math.floor(burn_in_fraction * n_rows))


def chain_summary(out, burn_in_fraction=0.1, max_lag=200):
    """Per-parameter moments, quantiles and IACT plus acceptance statistics.

    Works on the post-burn-in part of the trace; ``out`` needs ``param_names``,
    ``theta_trace`` (initial row included) and ``accept_flags``.
    """
    thetas = np.asarray(out.theta_trace, dtype=float)
    flags = np.asarray(out.accept_flags, dtype=bool)
    b = burn_in_rows(thetas.shape[0], burn_in_fraction)
    kept = thetas[b:]
    kept_flags = flags[max(b, 1) - 1 :]
    if kept.shape[0] == 0:
        raise ValueError("empty post-burn-in trace")

    params = {}
    for j, name in enumerate(out.param_names):
        col = kept[:, j]
        q = np.quantile(col, [0.025, 0.5, 0.975])
        entry = {
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if col.shape[0] > 1 else 0.0,
            "q025": float(q[0]),
            "q50": float(q[1]),
            "q975": float(q[2]),
        }
        if col.shape[0] > 2 and np.ptp(col) > 0:
            res = iact(col, min(max_lag, col.shape[0] - 1))
            entry["iact"] = res.value
            entry["ess"] = col.shape[0] / res.value
        else:
            entry["iact"] = None
            entry["ess"] = None
        params[name] = entry

    n_acc = kept_flags.shape[0]
    running = (np.cumsum(kept_flags) / np.arange(1, n_acc + 1)) if n_acc else np.array([])
    return {
        "n_iter": int(flags.shape[0]),
        "burn_in_rows": b,
        "n_kept": int(kept.shape[0]),
        "acceptance_rate": float(kept_flags.mean()) if n_acc else None,
        "acceptance_rate_all": float(flags.mean()) if flags.shape[0] else None,
        "running_acceptance": running,
        "max_rejection_run": max_rejection_run(kept_flags),
        "params": params,
    }

import os

# The sandbox may expose a single core; a larger pool still lets the
# threads=8 paths really run on eight workers.
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from scipy.stats import multivariate_normal  # noqa: E402


def dense_lg_logpdf(phi, sx, sy, y):
    """log p(y_1:T) for the LG model from its full covariance matrix."""
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    lags = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    cov = sx**2 * phi**lags / (1 - phi**2) + sy**2 * np.eye(T)
    return multivariate_normal(mean=np.zeros(T), cov=cov).logpdf(y)


@pytest.fixture
def dense_loglik():
    return dense_lg_logpdf

"""Thread-count plumbing for the compiled particle loops."""

import contextlib
import logging
import os

import numba

log = logging.getLogger(__name__)

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


def resolve_threads(threads=None):
    """Thread count after the ``PMMH_THREADS`` override, clipped to numba's pool."""
    env = os.environ.get("PMMH_THREADS")
    if env:
        threads = int(env)
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}")
    cap = numba.config.NUMBA_NUM_THREADS
    if threads > cap:
        log.info("requested %d threads, numba pool holds %d", threads, cap)
        threads = cap
    return threads


@contextlib.contextmanager
def thread_count(threads):
    old = numba.get_num_threads()
    numba.set_num_threads(threads)
    try:
        yield threads
    finally:
        numba.set_num_threads(old)

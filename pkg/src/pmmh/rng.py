"""Counter-based random streams (Philox4x32-10).

Every draw is a pure function of ``(key, counter)``, so a particle's noise at a
given time step does not depend on how particles are split across threads.
Counter layout used throughout the package::

    c0 = particle index, c1 = time step, c2 = run index,
    c3 = (purpose << 24) | draw index

A stream is a ``uint64[6]`` array ``[k0, k1, c0, c1, c2, c3]`` (32-bit words
stored in 64-bit slots); each draw consumes one counter block and bumps ``c3``.
"""

import numpy as np
from numba import njit

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_TWO_PI = 2.0 * np.pi

# purposes (high byte of c3)
FILTER = 1
RESAMPLE = 2
PROPOSE = 3
ACCEPT = 4
LINEAGE = 5
PRIOR_DRAW = 6
SIMULATE = 7
DERIVE = 255


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block; all arguments are uint64 holding 32-bit words."""
    m = np.uint64(0xFFFFFFFF)
    for r in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & m
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & m
        c0 = (hi1 ^ c1 ^ k0) & m
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & m
        c3 = lo0
        if r < 9:
            k0 = (k0 + np.uint64(0x9E3779B9)) & m
            k1 = (k1 + np.uint64(0xBB67AE85)) & m
    return c0, c1, c2, c3


@njit(cache=True)
def _to_unit(a, b):
    # 53-bit double in [0, 1)
    return ((a >> np.uint64(5)) * 67108864.0 + (b >> np.uint64(6))) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _block(stream):
    r0, r1, r2, r3 = philox4x32(stream[2], stream[3], stream[4], stream[5], stream[0], stream[1])
    stream[5] = (stream[5] + np.uint64(1)) & np.uint64(0xFFFFFFFF)
    return r0, r1, r2, r3


@njit(cache=True)
def uniform(stream):
    """Uniform draw on [0, 1)."""
    r0, r1, r2, r3 = _block(stream)
    return _to_unit(r0, r1)


@njit(cache=True)
def std_normal(stream):
    """Standard normal draw (Box-Muller on one counter block)."""
    r0, r1, r2, r3 = _block(stream)
    u1 = 1.0 - _to_unit(r0, r1)
    u2 = _to_unit(r2, r3)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@njit(cache=True)
def set_stream(stream, k0, k1, particle, step, run, purpose):
    stream[0] = k0
    stream[1] = k1
    stream[2] = np.uint64(particle) & np.uint64(0xFFFFFFFF)
    stream[3] = np.uint64(step) & np.uint64(0xFFFFFFFF)
    stream[4] = np.uint64(run) & np.uint64(0xFFFFFFFF)
    stream[5] = (np.uint64(purpose) & np.uint64(0xFF)) << np.uint64(24)


def split_seed(seed):
    """Map a nonnegative integer seed (< 2**64) to a Philox key pair."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


class Key:
    """A Philox key plus helpers to open streams and derive child keys."""

    __slots__ = ("k0", "k1")

    def __init__(self, seed=0, _words=None):
        if _words is None:
            _words = split_seed(seed)
        self.k0, self.k1 = (int(w) & 0xFFFFFFFF for w in _words)

    @property
    def words(self):
        return np.uint64(self.k0), np.uint64(self.k1)

    def child(self, *labels):
        """Derive an independent key by hashing integer labels through Philox."""
        k0, k1 = self.k0, self.k1
        for label in labels:
            label = int(label)
            r = philox4x32(
                np.uint64(label & 0xFFFFFFFF),
                np.uint64((label >> 32) & 0xFFFFFFFF),
                np.uint64(0),
                np.uint64(DERIVE << 24),
                np.uint64(k0),
                np.uint64(k1),
            )
            k0, k1 = int(r[0]), int(r[1])
        return Key(_words=(k0, k1))

    def stream(self, particle=0, step=0, run=0, purpose=0):
        return Stream(self, particle, step, run, purpose)

    def __eq__(self, other):
        return isinstance(other, Key) and (self.k0, self.k1) == (other.k0, other.k1)

    def __hash__(self):
        return hash((self.k0, self.k1))

    def __repr__(self):
        return f"Key(k0={self.k0:#010x}, k1={self.k1:#010x})"


class Stream:
    """Python handle on one counter-based stream.

    ``state`` is the raw ``uint64[6]`` array accepted by the jitted samplers,
    so the same object drives both Python-level and compiled code.
    """

    __slots__ = ("state",)

    def __init__(self, key, particle=0, step=0, run=0, purpose=0):
        self.state = np.zeros(6, dtype=np.uint64)
        set_stream(self.state, *key.words, particle, step, run, purpose)

    def uniform(self, size=None):
        if size is None:
            return uniform(self.state)
        return _fill_uniform(self.state, int(size))

    def standard_normal(self, size=None):
        if size is None:
            return std_normal(self.state)
        return _fill_normal(self.state, int(size))


@njit(cache=True)
def _fill_uniform(stream, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(stream)
    return out


@njit(cache=True)
def _fill_normal(stream, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = std_normal(stream)
    return out


def as_key(seed_or_key):
    if isinstance(seed_or_key, Key):
        return seed_or_key
    return Key(seed_or_key)

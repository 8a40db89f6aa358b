import numpy as np
import pytest

from pmmh.rng import FILTER, Key, Stream, philox4x32

u = np.uint64


@pytest.mark.parametrize(
    "ctr, key, expected",
    [
        ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
        ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
        (
            (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
            (0xA4093822, 0x299F31D0),
            (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
        ),
    ],
)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(*(u(c) for c in ctr), *(u(k) for k in key))
    assert tuple(int(v) for v in out) == expected


def test_uniform_range_and_moments():
    x = Stream(Key(3)).uniform(200_000)
    assert x.min() >= 0.0 and x.max() < 1.0
    assert abs(x.mean() - 0.5) < 4 * np.sqrt(1 / 12 / x.size)


def test_normal_moments():
    z = Stream(Key(4)).standard_normal(200_000)
    n = z.size
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)


def test_streams_are_counter_addressed():
    key = Key(11)
    a = Stream(key, particle=5, step=3, run=7, purpose=FILTER).standard_normal(4)
    b = Stream(key, particle=5, step=3, run=7, purpose=FILTER).standard_normal(4)
    c = Stream(key, particle=6, step=3, run=7, purpose=FILTER).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_child_keys_are_deterministic_and_distinct():
    key = Key(2**40 + 17)
    assert key.child(1) == key.child(1)
    assert key.child(1) != key.child(2)
    assert key.child(1, 2) != key.child(2, 1)


def test_seed_range():
    with pytest.raises(ValueError):
        Key(-1)
    with pytest.raises(ValueError):
        Key(2**64)

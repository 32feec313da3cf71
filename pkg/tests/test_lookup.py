"""Lookup-table remainder vs the native operator."""

import numpy as np
import pytest

from rnsfhe.coremath.lookup import build_lookup_table, lookup_mod
from rnsfhe.coremath.modmath import Modulus, ParameterError
from rnsfhe.coremath.primes import gen_ntt_prime_chain

DIVISORS = [m.value for m in gen_ntt_prime_chain(45, 4096, 3)] + [
    m.value for m in gen_ntt_prime_chain(36, 64, 2)
] + [65537]


@pytest.mark.parametrize("y", DIVISORS)
def test_boundaries(y):
    table = build_lookup_table(Modulus(y))
    for x in (0, 1, y - 1, y, y + 1, 2 * y - 1, 2 * y,
              (1 << 63) - 1, 1 << 63, (1 << 64) - 1):
        assert lookup_mod(x, table) == x % y


def test_randomized(np_rng):
    for y in DIVISORS:
        table = build_lookup_table(Modulus(y))
        xs = np_rng.integers(0, 1 << 63, 2000, dtype=np.uint64)
        for x in xs.tolist():
            assert lookup_mod(x, table) == x % y


def test_window_widths():
    y = DIVISORS[0]
    for w in (4, 8, 12, 16):
        table = build_lookup_table(Modulus(y), window_bits=w)
        for x in (12345678901234567, (1 << 64) - 1, y * 1000 + 17):
            assert lookup_mod(x, table) == x % y


def test_bad_window_rejected():
    with pytest.raises(ParameterError):
        build_lookup_table(Modulus(DIVISORS[0]), window_bits=0)
    with pytest.raises(ParameterError):
        build_lookup_table(Modulus(DIVISORS[0]), window_bits=17)

"""Word-level modular arithmetic on 64-bit words.

A ``Modulus`` carries its Barrett reduction constant (floor(2**128 / q) split
into two 64-bit words) so that ``mul_mod`` can reduce the 128-bit product of
two reduced operands with one estimated quotient and at most two corrections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

WORD_BITS = 64
_BARRETT_SHIFT = 128


class ParameterError(ValueError):
    """Raised for invalid numeric parameters (bad modulus, bad window, ...)."""


@dataclass(frozen=True)
class Modulus:
    """An odd prime modulus with precomputed reduction constants.

    ``is_ntt_friendly_for`` is the largest power-of-two degree n with
    value == 1 (mod 2n), or 0 when value is not 1 mod 4.
    """

    value: int
    bit_len: int = field(init=False)
    barrett_hi: int = field(init=False)
    barrett_lo: int = field(init=False)
    is_ntt_friendly_for: int = field(init=False)

    def __post_init__(self):
        q = self.value
        if q < 2 or q >= (1 << 62):
            raise ParameterError(f"modulus {q} out of supported range [2, 2^62)")
        if q % 2 == 0:
            raise ParameterError("modulus must be odd")
        if not is_prime(q):
            raise ParameterError(f"modulus {q} is not prime")
        barrett = (1 << _BARRETT_SHIFT) // q
        object.__setattr__(self, "bit_len", q.bit_length())
        object.__setattr__(self, "barrett_hi", barrett >> WORD_BITS)
        object.__setattr__(self, "barrett_lo", barrett & ((1 << WORD_BITS) - 1))
        n = 1
        while (q - 1) % (2 * n) == 0:
            n <<= 1
        object.__setattr__(self, "is_ntt_friendly_for", n >> 1)

    @property
    def barrett(self) -> int:
        return (self.barrett_hi << WORD_BITS) | self.barrett_lo


def mul_mod(a: int, b: int, m: Modulus) -> int:
    """(a * b) mod m via the 128-bit product and the Barrett constant."""
    prod = a * b
    q_est = (prod * m.barrett) >> _BARRETT_SHIFT
    r = prod - q_est * m.value
    while r >= m.value:
        r -= m.value
    return r


def add_mod(a: int, b: int, m: Modulus) -> int:
    s = a + b
    return s - m.value if s >= m.value else s


def sub_mod(a: int, b: int, m: Modulus) -> int:
    d = a - b
    return d + m.value if d < 0 else d


def neg_mod(a: int, m: Modulus) -> int:
    return 0 if a == 0 else m.value - a


def pow_mod(a: int, e: int, m: Modulus) -> int:
    """Square-and-multiply exponentiation mod m."""
    result = 1
    base = a % m.value
    while e > 0:
        if e & 1:
            result = mul_mod(result, base, m)
        base = mul_mod(base, base, m)
        e >>= 1
    return result


def inv_mod(a: int, m: Modulus) -> int:
    """Inverse via Fermat (m prime); raises for non-invertible inputs."""
    if a % m.value == 0:
        raise ParameterError("non-invertible: 0 has no inverse")
    return pow_mod(a, m.value - 2, m)


# Deterministic Miller-Rabin witness set for 64-bit integers.
_MR_WITNESSES_64 = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int, rounds: int = 40) -> bool:
    """Miller-Rabin primality test.

    Uses the deterministic witness set for n < 2^64; larger n fall back to
    ``rounds`` pseudo-random witnesses.
    """
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    if n < (1 << 64):
        witnesses = _MR_WITNESSES_64
    else:
        import random

        rng = random.Random(n)
        witnesses = tuple(rng.randrange(2, n - 1) for _ in range(rounds))
    for a in witnesses:
        x = pow(a % n, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = (x * x) % n
            if x == n - 1:
                break
        else:
            return False
    return True

"""NTT-friendly prime generation and primitive root search."""

from __future__ import annotations

from typing import Iterable

from .modmath import Modulus, ParameterError, is_prime, mul_mod, pow_mod

_MAX_ATTEMPTS = 1 << 20


def gen_ntt_prime(bits: int, n: int, exclude: Iterable[int] = ()) -> Modulus:
    """Smallest prime of the given bit length with q == 1 (mod 2n), skipping
    ``exclude``.  n must be a power of two."""
    if n < 2 or n & (n - 1):
        raise ParameterError(f"degree {n} is not a power of two")
    if not 2 <= bits <= 61:
        raise ParameterError(f"bit length {bits} outside [2, 61]")
    excluded = set(exclude)
    step = 2 * n
    # First candidate of the requested bit length congruent to 1 mod 2n.
    q = ((1 << (bits - 1)) // step) * step + 1
    if q < (1 << (bits - 1)):
        q += step
    for _ in range(_MAX_ATTEMPTS):
        if q >= (1 << bits):
            break
        if q not in excluded and is_prime(q):
            return Modulus(q)
        q += step
    raise ParameterError(f"no {bits}-bit prime == 1 mod {step} found")


def gen_ntt_prime_chain(bits: int, n: int, count: int, extra_exclude: Iterable[int] = ()) -> list[Modulus]:
    """A chain of ``count`` distinct NTT-friendly primes of one bit length."""
    chain: list[Modulus] = []
    exclude = set(extra_exclude)
    for _ in range(count):
        m = gen_ntt_prime(bits, n, exclude)
        exclude.add(m.value)
        chain.append(m)
    return chain


def find_primitive_root(modulus: Modulus, order: int) -> int:
    """A primitive ``order``-th root of unity mod q (order a power of two
    dividing q - 1).  For order = 2n the result r satisfies r^n == -1."""
    q = modulus.value
    if (q - 1) % order != 0:
        raise ParameterError(f"{order} does not divide {q} - 1")
    cofactor = (q - 1) // order
    for g in range(2, q):
        r = pow_mod(g, cofactor, modulus)
        # Primitive iff r^(order/2) == -1.
        if pow_mod(r, order // 2, modulus) == q - 1:
            return r
    raise ParameterError(f"no primitive {order}-th root mod {q}")


def min_primitive_root(modulus: Modulus, order: int) -> int:
    """The smallest primitive root of the given order (deterministic tables)."""
    root = find_primitive_root(modulus, order)
    # Walk the odd powers to find the numerically smallest primitive root.
    best = root
    current = root
    gen_sq = mul_mod(root, root, modulus)
    for _ in range(order // 2 - 1):
        current = mul_mod(current, gen_sq, modulus)
        if current < best:
            best = current
    return best

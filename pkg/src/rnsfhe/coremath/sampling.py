"""Deterministic samplers for keys, randomness, and noise.

Everything is driven by a 32-byte seed through numpy's Philox generator so a
(seed, counter) pair reproduces the exact same polynomials on every host.
The error distribution is a centered binomial with k = 20 pairs, giving
standard deviation sqrt(10) ~= 3.16.
"""

from __future__ import annotations

import secrets

import numpy as np

from .modmath import ParameterError

SEED_BYTES = 32
CBD_PAIRS = 20  # centered binomial parameter; sigma = sqrt(k/2)

ERROR_STDDEV = float(np.sqrt(CBD_PAIRS / 2.0))


def fresh_seed() -> bytes:
    return secrets.token_bytes(SEED_BYTES)


class Rng:
    """Seeded polynomial sampler over an RNS modulus chain."""

    def __init__(self, seed: bytes):
        if len(seed) != SEED_BYTES:
            raise ParameterError(f"seed must be {SEED_BYTES} bytes, got {len(seed)}")
        self.seed = seed
        entropy = int.from_bytes(seed, "little")
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def uniform_residues(self, q_arr: np.ndarray, n: int) -> np.ndarray:
        """(L, n) matrix with row i uniform over [0, q_i)."""
        rows = [
            self._gen.integers(0, int(q), size=n, dtype=np.uint64)
            for q in q_arr
        ]
        return np.stack(rows)

    def ternary(self, n: int) -> np.ndarray:
        """Signed coefficients uniform over {-1, 0, 1}."""
        return self._gen.integers(-1, 2, size=n, dtype=np.int64)

    def cbd_error(self, n: int) -> np.ndarray:
        """Centered binomial noise: sum of CBD_PAIRS (b - b') coin pairs."""
        bits = self._gen.integers(0, 2, size=(2 * CBD_PAIRS, n), dtype=np.int64)
        return bits[:CBD_PAIRS].sum(axis=0) - bits[CBD_PAIRS:].sum(axis=0)

    def uniform_bytes(self, count: int) -> bytes:
        return self._gen.bytes(count)


def signed_to_residues(coeffs: np.ndarray, q_arr: np.ndarray) -> np.ndarray:
    """Lift small signed coefficients to an (L, n) residue matrix."""
    out = np.empty((len(q_arr), coeffs.shape[0]), dtype=np.uint64)
    for i, q in enumerate(q_arr):
        out[i] = np.mod(coeffs, np.int64(q)).astype(np.uint64)
    return out

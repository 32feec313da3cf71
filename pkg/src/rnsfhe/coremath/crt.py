"""Residue number system bases and Chinese remainder reconstruction."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .modmath import Modulus, ParameterError, inv_mod

_U64 = np.uint64


class RnsBase:
    """An ordered tuple of pairwise-coprime word-sized moduli.

    Carries the punctured products Q/q_i and their inverses that every base
    conversion and reconstruction needs.
    """

    def __init__(self, moduli: list[Modulus]):
        if not moduli:
            raise ParameterError("empty modulus list")
        values = [m.value for m in moduli]
        if len(set(values)) != len(values):
            raise ParameterError("duplicate moduli in RNS base")
        self.moduli = list(moduli)
        self.values = values

    def __len__(self) -> int:
        return len(self.moduli)

    @cached_property
    def product(self) -> int:
        q = 1
        for v in self.values:
            q *= v
        return q

    @cached_property
    def punctured(self) -> list[int]:
        """Q / q_i as exact big integers."""
        return [self.product // v for v in self.values]

    @cached_property
    def punctured_inv(self) -> list[int]:
        """(Q / q_i)^{-1} mod q_i."""
        return [
            inv_mod(self.punctured[i] % m.value, m)
            for i, m in enumerate(self.moduli)
        ]

    @cached_property
    def q_arr(self) -> np.ndarray:
        return np.array(self.values, dtype=_U64)

    def drop_last(self) -> "RnsBase":
        if len(self.moduli) < 2:
            raise ParameterError("cannot drop the only modulus")
        return RnsBase(self.moduli[:-1])

    def residues_of(self, x: int) -> np.ndarray:
        return np.array([x % v for v in self.values], dtype=_U64)


def crt_reconstruct(residues, base: RnsBase) -> int:
    """Exact CRT lift of one residue vector into [0, Q)."""
    if len(residues) != len(base):
        raise ParameterError("residue count does not match base size")
    q = base.product
    acc = 0
    for i, r in enumerate(residues):
        acc += int(r) * base.punctured_inv[i] % base.values[i] * base.punctured[i]
    return acc % q


def crt_reconstruct_centered(residues, base: RnsBase) -> int:
    """CRT lift into the centered interval (-Q/2, Q/2]."""
    x = crt_reconstruct(residues, base)
    q = base.product
    return x - q if x > q // 2 else x


def crt_reconstruct_poly(rows: np.ndarray, base: RnsBase) -> list[int]:
    """CRT lift of a (L, n) residue matrix to n big integers in [0, Q)."""
    if rows.shape[0] != len(base):
        raise ParameterError("row count does not match base size")
    q = base.product
    # Combine per-residue contributions with Python ints; exact but O(L*n).
    weights = [
        base.punctured_inv[i] * base.punctured[i] % q for i in range(len(base))
    ]
    n = rows.shape[1]
    out = [0] * n
    for i in range(len(base)):
        w = weights[i]
        col = rows[i].tolist()
        for j in range(n):
            out[j] += col[j] * w
    return [v % q for v in out]

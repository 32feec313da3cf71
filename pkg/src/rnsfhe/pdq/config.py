"""PDQ configuration and the base-p digit decomposition of column values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coremath.modmath import ParameterError


@dataclass(frozen=True)
class PdqConfig:
    """Shape of one private-query deployment.

    Values are decomposed in base ``p`` into ``k`` digits; p**k must cover
    value_bound, and the row count must fit the slot count of the chosen
    profile.
    """

    base: int = 4
    digits: int = 8
    rows: int = 1024
    value_bound: int = 1 << 16
    profile: str = "pdq"
    mask_exp_range: int = 8       # inverse-protocol mask magnitude in [2^-e, 2^e]
    recip_threshold: float = 2.0 ** -20

    def __post_init__(self):
        if self.base < 2 or self.base ** self.digits < self.value_bound:
            raise ParameterError(
                f"{self.base}^{self.digits} does not cover values < {self.value_bound}"
            )

    @property
    def omega(self) -> complex:
        return np.exp(2j * np.pi / self.base)


def digit_decompose(v: int, p: int, k: int) -> list[int]:
    """Little-endian base-p digits of v; v must lie in [0, p^k)."""
    if not 0 <= v < p ** k:
        raise ParameterError(f"value {v} outside [0, {p}^{k})")
    out = []
    for _ in range(k):
        out.append(v % p)
        v //= p
    return out


def digit_recompose(digits, p: int) -> int:
    v = 0
    for d in reversed(digits):
        v = v * p + d
    return v

"""Lookup-table remainder for 64-bit dividends by word-sized divisors.

The dividend is consumed in len(Y)-bit chunks; folding the running value T
back below 2^len(Y) after each shift goes through a table of
``(window << len_Y) mod Y`` entries instead of a hardware divide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .modmath import Modulus, ParameterError

DEFAULT_WINDOW_BITS = 8


@dataclass(frozen=True)
class LookupTable:
    divisor: Modulus
    window_bits: int
    len_y: int = field(init=False)
    poly_mod_y: int = field(init=False)
    entries: tuple = field(init=False)

    def __post_init__(self):
        y = self.divisor.value
        w = self.window_bits
        if not 1 <= w <= 16:
            raise ParameterError(f"window bits {w} outside [1, 16]")
        len_y = y.bit_length()
        entries = tuple((i << len_y) % y for i in range(1 << w))
        object.__setattr__(self, "len_y", len_y)
        object.__setattr__(self, "poly_mod_y", (1 << len_y) % y)
        object.__setattr__(self, "entries", entries)


def build_lookup_table(divisor: Modulus, window_bits: int = DEFAULT_WINDOW_BITS) -> LookupTable:
    return LookupTable(divisor=divisor, window_bits=window_bits)


def _set_higher_bits_0(t: int, table: LookupTable) -> int:
    # Fold T below 2^len_Y while preserving T mod Y.
    top = 1 << table.len_y
    while t >= top:
        t = t - top + table.poly_mod_y
    return t


def _shift_reduce(t: int, shift: int, table: LookupTable) -> int:
    # T -> T * 2^shift (mod Y), keeping T < 2^len_Y.  The bits pushed past
    # len_Y select a table entry congruent to their value.
    idx = t >> (table.len_y - shift)
    t = ((t << shift) & ((1 << table.len_y) - 1))
    if idx != 0:
        t += table.entries[idx]
    return _set_higher_bits_0(t, table)


def lookup_mod(x: int, table: LookupTable) -> int:
    """x mod Y for 64-bit x, via the segmented shift/lookup/accumulate loop."""
    len_y = table.len_y
    w = table.window_bits
    digits = (1 << len_y) - 1
    shift_1st = (64 // len_y) * len_y
    # First sub-shift is the leftover width, then full windows of w bits.
    shift_2nd = ((len_y - 1) % w) + 1
    n_full = (len_y - shift_2nd) // w

    t = x >> shift_1st
    for shift in range(shift_1st - len_y, -1, -len_y):
        nxt = (x >> shift) & digits
        t = _shift_reduce(t, shift_2nd, table)
        for _ in range(n_full):
            t = _shift_reduce(t, w, table)
        t += nxt
        t = _set_higher_bits_0(t, table)
    y = table.divisor.value
    return t - y if t >= y else t

"""Batching: packing n integers mod t into the 2 x (n/2) slot matrix.

t must be a prime with t == 1 (mod 2n) so Z_t[X]/(X^n+1) splits completely.
Slot (r, j) of the matrix sits on the evaluation at alpha^(5^j) for row 0
and alpha^(-5^j) for row 1, with alpha a primitive 2n-th root mod t; this
makes rotate_rows the g=5^k automorphism and rotate_columns g=2n-1, shared
with the CKKS Galois machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..context import Context
from ..coremath.modmath import ParameterError
from ..coremath.ntt import intt_bm, ntt_bm
from ..rnspoly import CData, Domain, cdata_new


@dataclass
class IntPlaintext:
    """Coefficient vector over Z_t (single row CData); ``batched`` records
    whether slots or raw coefficients were encoded."""

    data: CData
    batched: bool


_slot_pos_cache: dict[int, np.ndarray] = {}


def _slot_positions(ctx: Context) -> np.ndarray:
    """positions[r*half + j]: index in plain-NTT output order of slot (r, j)."""
    n = ctx.n
    if n in _slot_pos_cache:
        return _slot_pos_cache[n]
    half = n // 2
    exps = ctx.plain_ntt.exponent_map()
    pos_of = np.empty(2 * n, dtype=np.int64)
    pos_of[exps] = np.arange(n)
    out = np.empty(n, dtype=np.int64)
    cur = 1
    for j in range(half):
        out[j] = pos_of[cur]
        out[half + j] = pos_of[2 * n - cur]
        cur = cur * 5 % (2 * n)
    _slot_pos_cache[n] = out
    return out


def _require_batching(ctx: Context):
    if ctx.plain_ntt is None:
        t = ctx.plain_modulus.value if ctx.plain_modulus else None
        raise ParameterError(f"plain modulus {t} is not batching friendly "
                             f"(needs t == 1 mod 2n)")


def batch_encode(ctx: Context, values) -> IntPlaintext:
    _require_batching(ctx)
    n = ctx.n
    t = ctx.plain_modulus.value
    v = np.asarray(values, dtype=np.uint64) % np.uint64(t)
    if v.size > n:
        raise ParameterError(f"{v.size} values exceed {n} slots")
    if v.size < n:
        v = np.concatenate([v, np.zeros(n - v.size, dtype=np.uint64)])
    evals = np.empty(n, dtype=np.uint64)
    evals[_slot_positions(ctx)] = v
    coeffs = intt_bm(evals, ctx.plain_ntt)
    cd = cdata_new(ctx.pool, 1, 1, n)
    cd.view()[0, 0] = coeffs
    return IntPlaintext(data=cd, batched=True)


def batch_decode(ctx: Context, pt: IntPlaintext) -> np.ndarray:
    _require_batching(ctx)
    evals = ntt_bm(pt.data.view()[0, 0], ctx.plain_ntt)
    return evals[_slot_positions(ctx)]


def coeff_encode(ctx: Context, values) -> IntPlaintext:
    """Unbatched encoding: values become raw polynomial coefficients."""
    n = ctx.n
    t = ctx.plain_modulus.value
    v = np.asarray(values, dtype=np.uint64) % np.uint64(t)
    if v.size > n:
        raise ParameterError(f"{v.size} coefficients exceed degree {n}")
    cd = cdata_new(ctx.pool, 1, 1, n)
    cd.view()[0, 0, : v.size] = v
    return IntPlaintext(data=cd, batched=False)


def coeff_decode(ctx: Context, pt: IntPlaintext) -> np.ndarray:
    return pt.data.view()[0, 0].copy()

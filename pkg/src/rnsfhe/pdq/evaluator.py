"""Leveled CKKS evaluation helpers for the query engine.

The engine keeps every settled ciphertext at (approximately) the profile's
default scale.  The chain primes of the pdq profile sit within about 1e-7
relative of the scale itself, so rescaling after a product lands back on the
working scale; residual float drift is absorbed by retagging scales that
agree within RETAG_RTOL instead of burning a level on an exact adjustment.

Rotations and conjugations ride the key-switch noise, which is large
relative to a single scale factor.  Every rotation here is therefore done
"boosted": multiply by 1.0 at scale q_last, rotate while the scale is the
square of the working scale, rescale once at the end.  A rotation (or a
whole rotate-and-sum tree) costs exactly one level.
"""

from __future__ import annotations

import numpy as np

from ..context import Context
from ..coremath.sampling import Rng, fresh_seed
from ..coremath.vecmod import sub_arr
from ..keys import GaloisKeys, KSwitchKey, PublicKey, SecretKey
from ..schemes.ckks import (
    CkksCiphertext,
    ScaleMismatch,
    ckks_add,
    ckks_add_plain,
    ckks_decode,
    ckks_decrypt,
    ckks_encode,
    ckks_encrypt,
    ckks_multiply,
    ckks_multiply_plain,
    ckks_multiply_scalar,
    ckks_relinearize,
    ckks_rescale,
    ckks_rotate,
    ckks_square,
)

RETAG_RTOL = 1e-4


def rotation_steps(n: int) -> list[int]:
    """Power-of-two steps covering the full slot count."""
    steps, s = [], 1
    while s < n // 2:
        steps.append(s)
        s *= 2
    return steps


class CkksEval:
    """Context plus evaluation keys, with level/scale management."""

    def __init__(self, ctx: Context, relin_key: KSwitchKey | None = None,
                 galois_keys: GaloisKeys | None = None):
        self.ctx = ctx
        self.relin_key = relin_key
        self.galois_keys = galois_keys

    @property
    def slots(self) -> int:
        return self.ctx.n // 2

    # -- plaintext I/O --------------------------------------------------
    def encode(self, values, level: int | None = None,
               scale: float | None = None):
        return ckks_encode(self.ctx, values, scale=scale, level=level)

    def encrypt(self, values, pk: PublicKey, rng: Rng | None = None,
                scale: float | None = None) -> CkksCiphertext:
        return ckks_encrypt(self.ctx, self.encode(values, scale=scale), pk,
                            rng or Rng(fresh_seed()))

    def decrypt(self, ct: CkksCiphertext, sk: SecretKey) -> np.ndarray:
        return ckks_decode(self.ctx, ckks_decrypt(self.ctx, ct, sk))

    # -- level plumbing -------------------------------------------------
    def drop(self, ct: CkksCiphertext, level: int) -> CkksCiphertext:
        """Lower ct to ``level`` keeping its scale (one boost+rescale each)."""
        while ct.level > level:
            q = self.ctx.q_values[ct.level - 1]
            s = ct.scale
            ct = ckks_rescale(self.ctx, ckks_multiply_scalar(
                self.ctx, ct, 1.0, scale=float(q)))
            ct.scale = s
        return ct

    def _pairwise(self, a: CkksCiphertext, b: CkksCiphertext):
        level = min(a.level, b.level)
        return self.drop(a, level), self.drop(b, level)

    def _retag(self, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
        if a.scale == b.scale:
            return b
        if abs(a.scale - b.scale) > RETAG_RTOL * a.scale:
            raise ScaleMismatch(f"scales {a.scale} and {b.scale} "
                                f"too far apart to retag")
        b = CkksCiphertext(b.data, a.scale, b.level)
        return b

    # -- arithmetic -----------------------------------------------------
    def add(self, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
        a, b = self._pairwise(a, b)
        return ckks_add(self.ctx, a, self._retag(a, b))

    def add_many(self, cts) -> CkksCiphertext:
        acc = cts[0]
        for ct in cts[1:]:
            acc = self.add(acc, ct)
        return acc

    def negate(self, ct: CkksCiphertext) -> CkksCiphertext:
        out = ct.copy()
        q_col = self.ctx.chain_consts.q[: ct.level].reshape(-1, 1)
        v = out.data.view()
        v[:] = sub_arr(np.zeros_like(v), v, q_col)
        return out

    def add_const(self, ct: CkksCiphertext, c: complex) -> CkksCiphertext:
        pt = self.encode(np.full(self.slots, c, dtype=np.complex128),
                         level=ct.level, scale=ct.scale)
        return ckks_add_plain(self.ctx, ct, pt)

    def one_minus(self, ct: CkksCiphertext) -> CkksCiphertext:
        return self.add_const(self.negate(ct), 1.0)

    def mul(self, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
        # unlike add, multiply has no scale constraint: scales just compose
        a, b = self._pairwise(a, b)
        t = ckks_multiply(self.ctx, a, b)
        return ckks_rescale(self.ctx, ckks_relinearize(self.ctx, t, self.relin_key))

    def square(self, a: CkksCiphertext) -> CkksCiphertext:
        t = ckks_square(self.ctx, a)
        return ckks_rescale(self.ctx, ckks_relinearize(self.ctx, t, self.relin_key))

    def mul_scalar(self, ct: CkksCiphertext, z: complex) -> CkksCiphertext:
        """Scalar product that keeps the working scale (costs one level)."""
        q = self.ctx.q_values[ct.level - 1]
        s = ct.scale
        out = ckks_rescale(self.ctx, ckks_multiply_scalar(
            self.ctx, ct, z, scale=float(q)))
        out.scale = s
        return out

    def mul_plain_vec(self, ct: CkksCiphertext, vec) -> CkksCiphertext:
        """Slot-wise product with a plaintext vector, scale kept (one level)."""
        q = self.ctx.q_values[ct.level - 1]
        s = ct.scale
        pt = self.encode(vec, level=ct.level, scale=float(q))
        out = ckks_rescale(self.ctx, ckks_multiply_plain(self.ctx, ct, pt))
        out.scale = s
        return out

    # -- rotations ------------------------------------------------------
    def _boost(self, ct: CkksCiphertext) -> CkksCiphertext:
        q = self.ctx.q_values[ct.level - 1]
        return ckks_multiply_scalar(self.ctx, ct, 1.0, scale=float(q))

    def rotate(self, ct: CkksCiphertext, step: int) -> CkksCiphertext:
        s = ct.scale
        out = ckks_rescale(self.ctx, ckks_rotate(
            self.ctx, self._boost(ct), step, self.galois_keys))
        out.scale = s
        return out

    def rotate_sum(self, ct: CkksCiphertext, pre_vec=None) -> CkksCiphertext:
        """Every slot becomes the sum of all slots (one level total).

        pre_vec, when given, multiplies the slots before the summation by
        riding the boost plaintext, so slot filtering costs no extra level.
        """
        s = ct.scale
        if pre_vec is None:
            acc = self._boost(ct)
        else:
            q = self.ctx.q_values[ct.level - 1]
            pt = self.encode(pre_vec, level=ct.level, scale=float(q))
            acc = ckks_multiply_plain(self.ctx, ct, pt)
        for step in rotation_steps(self.ctx.n):
            acc = ckks_add(self.ctx, acc,
                           ckks_rotate(self.ctx, acc, step, self.galois_keys))
        out = ckks_rescale(self.ctx, acc)
        out.scale = s
        return out

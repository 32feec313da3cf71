"""Vectorized modular arithmetic kernels on numpy uint64 arrays.

Products of two sub-2^62 words need 128 bits, which numpy cannot hold, so
multiplication runs in Montgomery form (R = 2^64) built from exact 32-bit
limb products.  All kernels are element-wise and exact; they are the SIMD
work-horses every per-residue pass reduces to.
"""

from __future__ import annotations

import numpy as np

from .modmath import Modulus

_U64 = np.uint64
_MASK32 = _U64(0xFFFFFFFF)
_SH32 = _U64(32)

# Montgomery intermediates intentionally wrap mod 2^64.
np.seterr(over="ignore")


class MontgomeryOps:
    """Montgomery-form arithmetic for one modulus over uint64 arrays."""

    def __init__(self, modulus: Modulus):
        q = modulus.value
        self.modulus = modulus
        self.q = _U64(q)
        self.qinv = _U64(pow(-q, -1, 1 << 64))  # -q^{-1} mod 2^64
        r = (1 << 64) % q
        self.r = r
        self.r2 = _U64((r * r) % q)  # to-Montgomery factor

    # -- 128-bit product in two 64-bit halves ------------------------------
    @staticmethod
    def _mul128(x: np.ndarray, y: np.ndarray):
        x0 = x & _MASK32
        x1 = x >> _SH32
        y0 = y & _MASK32
        y1 = y >> _SH32
        lolo = x0 * y0
        m1 = x1 * y0
        m2 = x0 * y1
        lo = lolo + ((m1 & _MASK32) << _SH32)
        c1 = (lo < lolo).astype(_U64)
        lo2 = lo + ((m2 & _MASK32) << _SH32)
        c2 = (lo2 < lo).astype(_U64)
        hi = x1 * y1 + (m1 >> _SH32) + (m2 >> _SH32) + c1 + c2
        return hi, lo2

    def mont_mul(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """REDC(x * y): returns x*y*R^{-1} mod q, reduced to [0, q)."""
        hi, lo = self._mul128(x, y)
        m = lo * self.qinv
        mh, ml = self._mul128(m, self.q)
        carry = ((lo | ml) != 0).astype(_U64)
        t = hi + mh + carry
        return np.where(t >= self.q, t - self.q, t)

    def to_mont(self, x: np.ndarray) -> np.ndarray:
        return self.mont_mul(x, np.broadcast_to(self.r2, x.shape))

    def from_mont(self, x: np.ndarray) -> np.ndarray:
        return self.mont_mul(x, np.ones_like(x))

    # -- plain-domain element-wise ops -------------------------------------
    def mul(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """(x * y) mod q for plain-domain operands."""
        return self.mont_mul(self.mont_mul(x, y), np.broadcast_to(self.r2, x.shape))

    def mul_scalar(self, x: np.ndarray, c: int) -> np.ndarray:
        """(x * c) mod q; c is pre-lifted to Montgomery form internally."""
        c_mont = _U64((c % self.modulus.value) * self.r % self.modulus.value)
        return self.mont_mul(x, np.broadcast_to(c_mont, x.shape))

    def add(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        s = x + y
        return np.where(s >= self.q, s - self.q, s)

    def sub(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.where(x >= y, x - y, x + self.q - y)

    def neg(self, x: np.ndarray) -> np.ndarray:
        return np.where(x == 0, x, self.q - x)

    def reduce(self, x: np.ndarray) -> np.ndarray:
        """Reduce arbitrary uint64 values mod q (numpy % is exact here)."""
        return x % self.q


# ---------------------------------------------------------------------------
# Broadcast kernels: q/qinv may be arrays (one modulus per leading row), so a
# whole RNS chain is processed in one numpy pass.


def mul128(x: np.ndarray, y: np.ndarray):
    """Exact 128-bit product of uint64 arrays as (hi, lo) uint64 halves."""
    x0 = x & _MASK32
    x1 = x >> _SH32
    y0 = y & _MASK32
    y1 = y >> _SH32
    lolo = x0 * y0
    m1 = x1 * y0
    m2 = x0 * y1
    lo = lolo + ((m1 & _MASK32) << _SH32)
    c1 = (lo < lolo).astype(_U64)
    lo2 = lo + ((m2 & _MASK32) << _SH32)
    c2 = (lo2 < lo).astype(_U64)
    hi = x1 * y1 + (m1 >> _SH32) + (m2 >> _SH32) + c1 + c2
    return hi, lo2


def mont_mul_arr(x, y, q, qinv):
    """REDC(x * y) with per-row moduli; returns x*y*R^{-1} mod q in [0, q)."""
    hi, lo = mul128(x, y)
    m = lo * qinv
    mh, ml = mul128(m, q)
    carry = ((lo | ml) != 0).astype(_U64)
    t = hi + mh + carry
    return np.where(t >= q, t - q, t)


def mul_arr(x, y, q, qinv, r2):
    """Plain-domain (x * y) mod q via two REDC passes."""
    return mont_mul_arr(mont_mul_arr(x, y, q, qinv), np.broadcast_to(r2, x.shape), q, qinv)


def mul_hi64(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """High 64 bits of the exact 128-bit product."""
    x0 = x & _MASK32
    x1 = x >> _SH32
    y0 = y & _MASK32
    y1 = y >> _SH32
    m1 = x1 * y0
    m2 = x0 * y1
    carry = (((x0 * y0) >> _SH32) + (m1 & _MASK32) + (m2 & _MASK32)) >> _SH32
    return x1 * y1 + (m1 >> _SH32) + (m2 >> _SH32) + carry


def shoup_precompute(w, q):
    """floor(w * 2^64 / q) for constant-operand multiplication."""
    w_obj = np.asarray(w, dtype=object)
    q_obj = np.asarray(q, dtype=object)
    return ((w_obj << 64) // q_obj).astype(_U64)


def shoup_mul_arr(x, w, w_shoup, q):
    """(x * w) mod q with precomputed quotient; requires x < q and w < q."""
    hi = mul_hi64(x, w_shoup)
    r = x * w - hi * q  # wraps mod 2^64; true value is in [0, 2q)
    return np.where(r >= q, r - q, r)


def add_arr(x, y, q):
    s = x + y
    return np.where(s >= q, s - q, s)


def sub_arr(x, y, q):
    return np.where(x >= y, x - y, x + q - y)


def neg_arr(x, q):
    return np.where(x == 0, x, q - x)


_ops_cache: dict[int, MontgomeryOps] = {}


def ops_for(modulus: Modulus) -> MontgomeryOps:
    ops = _ops_cache.get(modulus.value)
    if ops is None:
        ops = MontgomeryOps(modulus)
        _ops_cache[modulus.value] = ops
    return ops

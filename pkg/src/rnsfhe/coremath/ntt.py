"""Negacyclic number theoretic transform, butterfly and matrix variants.

Both variants emit the same fixed output ordering (bit-reversed
Cooley-Tukey), so the dispatcher can pick either transparently.  Position j
of the output holds the evaluation of the input polynomial at
psi^(2*bitrev(j) + 1), with psi a primitive 2n-th root of unity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .modmath import Modulus, ParameterError, inv_mod, pow_mod
from .primes import min_primitive_root
from .vecmod import MontgomeryOps, ops_for

_U64 = np.uint64

MATRIX_DEGREE_LIMIT = 1024  # dispatch threshold: MM below, BM at or above

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba not installed
    _kernels = None


class ShapeError(ValueError):
    """Raised when a vector length does not match the table degree."""


class ConfigurationError(RuntimeError):
    """Raised when the matrix variant is requested without its tables."""


class NttVariant(str, Enum):
    AUTO = "auto"
    FORCE_BM = "force_bm"
    FORCE_MM = "force_mm"


def bit_reverse(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


@dataclass
class NttTables:
    """Precomputed twiddle factors for one (degree, modulus) pair."""

    degree: int
    modulus: Modulus
    psi: int = field(init=False)
    psi_powers: np.ndarray = field(init=False)      # bit-reversed, plain domain
    inv_psi_powers: np.ndarray = field(init=False)  # bit-reversed inverses
    n_inv: int = field(init=False)
    dft_matrix: np.ndarray | None = field(default=None, init=False)
    inv_dft_matrix: np.ndarray | None = field(default=None, init=False)

    def __post_init__(self):
        n = self.degree
        q = self.modulus
        if n < 2 or n & (n - 1):
            raise ParameterError(f"degree {n} is not a power of two")
        if (q.value - 1) % (2 * n) != 0:
            raise ParameterError(f"{q.value} is not NTT friendly for degree {n}")
        self.psi = min_primitive_root(q, 2 * n)
        bits = n.bit_length() - 1
        psi_pows = np.empty(n, dtype=_U64)
        ipsi_pows = np.empty(n, dtype=_U64)
        ipsi = inv_mod(self.psi, q)
        acc = 1
        iacc = 1
        fwd = [0] * n
        inv = [0] * n
        for i in range(n):
            fwd[i] = acc
            inv[i] = iacc
            acc = acc * self.psi % q.value
            iacc = iacc * ipsi % q.value
        for i in range(n):
            psi_pows[i] = fwd[bit_reverse(i, bits)]
            ipsi_pows[i] = inv[bit_reverse(i, bits)]
        self.psi_powers = psi_pows
        self.inv_psi_powers = ipsi_pows
        self.n_inv = inv_mod(n, q)
        ops = ops_for(q)
        self._ops = ops
        from .vecmod import shoup_precompute

        self._psi_shoup = shoup_precompute(psi_pows, q.value)
        self._ipsi_shoup = shoup_precompute(ipsi_pows, q.value)
        self._n_inv_shoup = _U64((self.n_inv << 64) // q.value)
        self._exp_map: np.ndarray | None = None

    # ------------------------------------------------------------------
    def materialize_matrix(self):
        """Build the n x n evaluation matrix (and its inverse) for the MM
        variant; stored in Montgomery form for the row-product kernels."""
        if self.dft_matrix is not None:
            return
        n = self.degree
        q = self.modulus.value
        order = 2 * n
        exps = self.exponent_map().astype(np.int64)
        # psi^k for k in [0, 2n); all matrix entries are drawn from this table.
        pow_table = np.empty(order, dtype=_U64)
        acc = 1
        for k in range(order):
            pow_table[k] = acc
            acc = acc * self.psi % q
        col = np.arange(n, dtype=np.int64)
        # V[j][i] = psi^(exp_j * i)
        idx = (exps[:, None] * col[None, :]) % order
        mat = pow_table[idx]
        # W[i][j] = n^{-1} * psi^(-i * exp_j)
        inv_idx = (-col[:, None] * exps[None, :]) % order
        ops = self._ops
        imat = ops.mul_scalar(pow_table[inv_idx], self.n_inv)
        self.dft_matrix = ops.to_mont(mat)
        self.inv_dft_matrix = ops.to_mont(imat)

    def exponent_map(self) -> np.ndarray:
        """exp_map[j]: output slot j evaluates the input at psi^exp_map[j]."""
        if self._exp_map is None:
            n = self.degree
            bits = n.bit_length() - 1
            exps = np.empty(n, dtype=np.int64)
            for j in range(n):
                exps[j] = 2 * bit_reverse(j, bits) + 1
            self._exp_map = exps
        return self._exp_map


def _check(vec: np.ndarray, tables: NttTables):
    if vec.shape != (tables.degree,):
        raise ShapeError(f"expected length {tables.degree}, got {vec.shape}")


def ntt_bm(coeffs: np.ndarray, tables: NttTables) -> np.ndarray:
    """Forward negacyclic NTT, iterative Cooley-Tukey butterflies."""
    from .vecmod import add_arr, shoup_mul_arr, sub_arr

    _check(coeffs, tables)
    q = _U64(tables.modulus.value)
    a = coeffs.astype(_U64, copy=True)
    n = tables.degree
    psi = tables.psi_powers
    psi_sh = tables._psi_shoup
    t = n
    m = 1
    while m < n:
        t >>= 1
        view = a.reshape(m, 2, t)
        s = psi[m : 2 * m].reshape(m, 1)
        s_sh = psi_sh[m : 2 * m].reshape(m, 1)
        u = view[:, 0, :]
        v = shoup_mul_arr(view[:, 1, :], s, s_sh, q)
        hi = add_arr(u, v, q)
        lo = sub_arr(u, v, q)
        view[:, 0, :] = hi
        view[:, 1, :] = lo
        m <<= 1
    return a


def intt_bm(evals: np.ndarray, tables: NttTables) -> np.ndarray:
    """Inverse of ntt_bm, Gentleman-Sande butterflies plus n^{-1} scaling."""
    from .vecmod import add_arr, shoup_mul_arr, sub_arr

    _check(evals, tables)
    q = _U64(tables.modulus.value)
    a = evals.astype(_U64, copy=True)
    n = tables.degree
    ipsi = tables.inv_psi_powers
    ipsi_sh = tables._ipsi_shoup
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        view = a.reshape(h, 2, t)
        s = ipsi[h : 2 * h].reshape(h, 1)
        s_sh = ipsi_sh[h : 2 * h].reshape(h, 1)
        u = view[:, 0, :]
        v = view[:, 1, :]
        hi = add_arr(u, v, q)
        lo = shoup_mul_arr(sub_arr(u, v, q), s, s_sh, q)
        view[:, 0, :] = hi
        view[:, 1, :] = lo
        t <<= 1
        m = h
    return shoup_mul_arr(a, np.broadcast_to(_U64(tables.n_inv), a.shape),
                         np.broadcast_to(tables._n_inv_shoup, a.shape), q)


def _mat_vec_mod(mat_mont: np.ndarray, vec: np.ndarray, ops: MontgomeryOps) -> np.ndarray:
    """Row-wise sum of Montgomery products, reduced by a halving tree so the
    uint64 accumulator never overflows."""
    prods = ops.mont_mul(mat_mont, np.broadcast_to(vec, mat_mont.shape))
    width = prods.shape[1]
    while width > 1:
        half = width // 2
        left = prods[:, :half]
        right = prods[:, half : 2 * half]
        s = ops.add(left, right)
        if width % 2:
            tail = prods[:, -1:].copy()
            prods = np.concatenate([s, tail], axis=1)
        else:
            prods = s
        width = prods.shape[1]
    return prods[:, 0].copy()


def ntt_mm(coeffs: np.ndarray, tables: NttTables) -> np.ndarray:
    """Forward NTT as an n x n matrix-vector product over Z_q."""
    _check(coeffs, tables)
    if tables.dft_matrix is None:
        raise ConfigurationError("dft matrix not materialized; call materialize_matrix()")
    return _mat_vec_mod(tables.dft_matrix, coeffs.astype(_U64, copy=False), tables._ops)


def intt_mm(evals: np.ndarray, tables: NttTables) -> np.ndarray:
    _check(evals, tables)
    if tables.inv_dft_matrix is None:
        raise ConfigurationError("dft matrix not materialized; call materialize_matrix()")
    # inverse matrix is indexed [coeff][slot]
    return _mat_vec_mod(tables.inv_dft_matrix, evals.astype(_U64, copy=False), tables._ops)


class NttChain:
    """Stacked butterfly transforms over a whole modulus chain.

    Processes a (rows, n) matrix of residue polynomials in one numpy pass per
    butterfly stage; ``mod_idx`` maps each row to its chain position.  Results
    are bit-identical to running ntt_bm/intt_bm row by row.
    """

    def __init__(self, tables: list[NttTables], variant: NttVariant | str = NttVariant.AUTO):
        if not tables:
            raise ParameterError("empty table chain")
        self.degree = tables[0].degree
        self.tables = tables
        self.variant = NttVariant(variant)
        self.psi = np.stack([t.psi_powers for t in tables])
        self.psi_shoup = np.stack([t._psi_shoup for t in tables])
        self.ipsi = np.stack([t.inv_psi_powers for t in tables])
        self.ipsi_shoup = np.stack([t._ipsi_shoup for t in tables])
        self.q = np.array([t.modulus.value for t in tables], dtype=_U64)
        self.n_inv = np.array([t.n_inv for t in tables], dtype=_U64)
        self.n_inv_shoup = np.array([int(t._n_inv_shoup) for t in tables], dtype=_U64)

    def _rows(self, a: np.ndarray, mod_idx):
        k = a.shape[0]
        if mod_idx is None:
            mod_idx = np.arange(k) % len(self.tables)
        mod_idx = np.asarray(mod_idx)
        if mod_idx.shape[0] != k:
            raise ShapeError("mod_idx length does not match row count")
        return mod_idx

    def _per_row(self, a: np.ndarray, mod_idx, inverse: bool) -> np.ndarray:
        # forced matrix variant: row-by-row through the dispatcher.  Only
        # sensible at small degrees; the n x n matrices get materialized on
        # first use and the result is bit-identical to the butterfly path.
        out = np.empty_like(a, dtype=_U64)
        for i, m in enumerate(np.asarray(mod_idx)):
            out[i] = ntt_dispatch(a[i], self.tables[int(m)], self.variant,
                                  inverse=inverse)
        return out

    def forward(self, a: np.ndarray, mod_idx=None) -> np.ndarray:
        from .vecmod import add_arr, shoup_mul_arr, sub_arr

        if a.ndim != 2 or a.shape[1] != self.degree:
            raise ShapeError(f"expected (rows, {self.degree}), got {a.shape}")
        mod_idx = self._rows(a, mod_idx)
        if self.variant is NttVariant.FORCE_MM:
            return self._per_row(a, mod_idx, inverse=False)
        if _kernels is not None:
            out = np.ascontiguousarray(a, dtype=_U64).copy()
            _kernels.ntt_batch(out, self.psi, self.psi_shoup, self.q,
                               np.ascontiguousarray(mod_idx, dtype=np.int64))
            return out
        k = a.shape[0]
        n = self.degree
        psi = self.psi[mod_idx]
        psi_sh = self.psi_shoup[mod_idx]
        q = self.q[mod_idx].reshape(k, 1, 1)
        a = a.astype(_U64, copy=True)
        t = n
        m = 1
        while m < n:
            t >>= 1
            view = a.reshape(k, m, 2, t)
            s = psi[:, m : 2 * m].reshape(k, m, 1)
            s_sh = psi_sh[:, m : 2 * m].reshape(k, m, 1)
            u = view[:, :, 0, :]
            v = shoup_mul_arr(view[:, :, 1, :], s, s_sh, q)
            hi = add_arr(u, v, q)
            lo = sub_arr(u, v, q)
            view[:, :, 0, :] = hi
            view[:, :, 1, :] = lo
            m <<= 1
        return a

    def inverse(self, a: np.ndarray, mod_idx=None) -> np.ndarray:
        from .vecmod import add_arr, shoup_mul_arr, sub_arr

        if a.ndim != 2 or a.shape[1] != self.degree:
            raise ShapeError(f"expected (rows, {self.degree}), got {a.shape}")
        mod_idx = self._rows(a, mod_idx)
        if self.variant is NttVariant.FORCE_MM:
            return self._per_row(a, mod_idx, inverse=True)
        if _kernels is not None:
            out = np.ascontiguousarray(a, dtype=_U64).copy()
            _kernels.intt_batch(out, self.ipsi, self.ipsi_shoup, self.n_inv,
                                self.n_inv_shoup, self.q,
                                np.ascontiguousarray(mod_idx, dtype=np.int64))
            return out
        k = a.shape[0]
        n = self.degree
        ipsi = self.ipsi[mod_idx]
        ipsi_sh = self.ipsi_shoup[mod_idx]
        q = self.q[mod_idx].reshape(k, 1, 1)
        a = a.astype(_U64, copy=True)
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            view = a.reshape(k, h, 2, t)
            s = ipsi[:, h : 2 * h].reshape(k, h, 1)
            s_sh = ipsi_sh[:, h : 2 * h].reshape(k, h, 1)
            u = view[:, :, 0, :]
            v = view[:, :, 1, :]
            hi = add_arr(u, v, q)
            lo = shoup_mul_arr(sub_arr(u, v, q), s, s_sh, q)
            view[:, :, 0, :] = hi
            view[:, :, 1, :] = lo
            t <<= 1
            m = h
        q2 = self.q[mod_idx].reshape(k, 1)
        ninv = self.n_inv[mod_idx].reshape(k, 1)
        ninv_sh = self.n_inv_shoup[mod_idx].reshape(k, 1)
        return shoup_mul_arr(a, np.broadcast_to(ninv, a.shape),
                             np.broadcast_to(ninv_sh, a.shape), q2)


def ntt_dispatch(coeffs: np.ndarray, tables: NttTables,
                 policy: NttVariant = NttVariant.AUTO, inverse: bool = False) -> np.ndarray:
    """Variant dispatch: matrix product below degree 1024, butterflies above."""
    policy = NttVariant(policy)
    if policy is NttVariant.FORCE_MM or (
        policy is NttVariant.AUTO and tables.degree < MATRIX_DEGREE_LIMIT
    ):
        if tables.dft_matrix is None:
            tables.materialize_matrix()
        return intt_mm(coeffs, tables) if inverse else ntt_mm(coeffs, tables)
    return intt_bm(coeffs, tables) if inverse else ntt_bm(coeffs, tables)

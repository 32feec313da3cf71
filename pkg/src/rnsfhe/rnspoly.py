"""CData storage layout and element-wise RNS polynomial arithmetic.

A CData is one pool-backed block holding ``size_poly`` polynomials, each as
``size_modulus`` residue rows of ``n`` coefficients.  The flat word index of
coefficient i of residue j of polynomial p is ((p * size_modulus) + j) * n + i,
so all data for one modulus is contiguous and can be handed to a worker lane
as an independent slice.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .coremath.modmath import Modulus
from .coremath.ntt import NttChain
from .coremath.vecmod import add_arr, mont_mul_arr, mul_arr, neg_arr, sub_arr
from .pools import MemoryPool, par_for_each_modulus

try:
    from .coremath import _kernels
except ImportError:  # pragma: no cover - numba not installed
    _kernels = None

_U64 = np.uint64
WORD_BYTES = 8


class ShapeMismatch(ValueError):
    pass


class DomainMismatch(ValueError):
    pass


class LevelExhausted(RuntimeError):
    pass


class Domain(str, Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


class ChainConstants:
    """Per-chain Montgomery constants as aligned uint64 arrays."""

    def __init__(self, values):
        vals = [int(v) for v in values]
        self.values = vals
        self.q = np.array(vals, dtype=_U64)
        self.qinv = np.array([pow(-v, -1, 1 << 64) for v in vals], dtype=_U64)
        self.r2 = np.array([((1 << 64) % v) ** 2 % v for v in vals], dtype=_U64)


_chain_cache: dict[tuple, ChainConstants] = {}


def chain_constants(values) -> ChainConstants:
    key = tuple(int(getattr(v, "value", v)) for v in values)
    cc = _chain_cache.get(key)
    if cc is None:
        cc = ChainConstants(key)
        _chain_cache[key] = cc
    return cc


class CData:
    """Pool-backed residue-major polynomial block.

    Single-owner; disjoint residue rows may be processed concurrently, the
    block itself must not be mutated from two places at once.
    """

    def __init__(self, pool: MemoryPool | None, size_poly: int, size_modulus: int,
                 n: int, domain: Domain = Domain.COEFFICIENT):
        if size_poly < 1 or size_modulus < 1 or n < 1:
            raise ShapeMismatch("all CData dimensions must be positive")
        self.pool = pool
        self.size_poly = size_poly
        self.size_modulus = size_modulus
        self.n = n
        words = size_poly * size_modulus * n
        self.capacity = words
        if pool is None:
            self.handle = None
            self._buf = np.zeros(words, dtype=_U64)
        else:
            self.handle = pool.ask(words * WORD_BYTES)
            self._buf = self.handle.words()
            self._buf[:words] = 0  # reused arena blocks carry stale data
        self.domains = [domain] * size_poly

    # ------------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.size_poly * self.size_modulus * self.n

    def view(self) -> np.ndarray:
        return self._buf[: self.size].reshape(self.size_poly, self.size_modulus, self.n)

    def poly(self, p: int) -> np.ndarray:
        return self.view()[p]

    def row(self, p: int, j: int) -> np.ndarray:
        return self.view()[p, j]

    def rows(self) -> np.ndarray:
        """(size_poly * size_modulus, n) row matrix in layout order."""
        return self._buf[: self.size].reshape(-1, self.n)

    def mod_idx(self) -> np.ndarray:
        """Chain position of each row of rows()."""
        return np.tile(np.arange(self.size_modulus), self.size_poly)

    # ------------------------------------------------------------------
    def resize(self, new_size_poly: int, new_size_modulus: int):
        """Grow or shrink in place.  Overlapping (polynomial, residue) rows
        are preserved; new rows are zeroed.  The pool is consulted only when
        the new size exceeds capacity."""
        if new_size_poly < 1 or new_size_modulus < 1:
            raise ShapeMismatch("resize dimensions must be positive")
        old = self.view()[: min(self.size_poly, new_size_poly),
                          : min(self.size_modulus, new_size_modulus)].copy()
        new_words = new_size_poly * new_size_modulus * self.n
        if new_words > self.capacity:
            if self.pool is None:
                self._buf = np.zeros(new_words, dtype=_U64)
            else:
                old_handle = self.handle
                self.handle = self.pool.ask(new_words * WORD_BYTES)
                self._buf = self.handle.words()
                self.pool.ret(old_handle)
            self.capacity = new_words
        self.size_poly = new_size_poly
        self.size_modulus = new_size_modulus
        v = self.view()
        v[:] = 0
        v[: old.shape[0], : old.shape[1]] = old
        doms = self.domains
        self.domains = [doms[p] if p < len(doms) else doms[-1] for p in range(new_size_poly)]

    def free(self):
        if self.pool is not None and self.handle is not None:
            self.pool.ret(self.handle)
            self.handle = None

    def __del__(self):
        # single-owner: dropping the last reference returns the block, so
        # short-lived temporaries recycle through the pool automatically
        try:
            self.free()
        except Exception:  # pragma: no cover - interpreter teardown
            pass

    def copy(self) -> "CData":
        out = CData(self.pool, self.size_poly, self.size_modulus, self.n)
        out.view()[:] = self.view()
        out.domains = list(self.domains)
        return out


def cdata_new(pool: MemoryPool | None, size_poly: int, size_modulus: int, n: int,
              domain: Domain = Domain.COEFFICIENT) -> CData:
    return CData(pool, size_poly, size_modulus, n, domain)


def cdata_resize(cd: CData, new_size_poly: int, new_size_modulus: int):
    cd.resize(new_size_poly, new_size_modulus)


def drop_last_modulus(cd: CData):
    if cd.size_modulus < 2:
        raise LevelExhausted("cannot drop the last remaining modulus")
    cd.resize(cd.size_poly, cd.size_modulus - 1)


# ---------------------------------------------------------------------------
# Element-wise operations.  All take full CData operands with matching shapes
# and write into a caller-provided output block.


def _check_shapes(out: CData, *operands: CData):
    for cd in operands:
        if (cd.size_poly, cd.size_modulus, cd.n) != (
            out.size_poly, out.size_modulus, out.n
        ):
            raise ShapeMismatch(
                f"shape {(cd.size_poly, cd.size_modulus, cd.n)} != "
                f"{(out.size_poly, out.size_modulus, out.n)}"
            )


def _check_domain(domain: Domain, *operands: CData):
    for cd in operands:
        for d in cd.domains:
            if d is not domain:
                raise DomainMismatch(f"expected {domain.value} domain, found {d.value}")


def _q_col(moduli, cd: CData) -> np.ndarray:
    cc = chain_constants(moduli)
    if len(cc.values) < cd.size_modulus:
        raise ShapeMismatch("modulus chain shorter than CData level")
    return cc.q[: cd.size_modulus].reshape(1, cd.size_modulus, 1)


def _same_domains(out: CData, src: CData):
    out.domains = list(src.domains)


def poly_add(a: CData, b: CData, out: CData, moduli, worker=None):
    _check_shapes(out, a, b)
    q = _q_col(moduli, out)
    if worker is None:
        out.view()[:] = add_arr(a.view(), b.view(), q)
    else:
        av, bv, ov = a.view(), b.view(), out.view()

        def mk(j):
            qj = q[0, j, 0]

            def task():
                ov[:, j] = add_arr(av[:, j], bv[:, j], qj)
            return task

        par_for_each_modulus(worker, [mk(j) for j in range(out.size_modulus)])
    _same_domains(out, a)


def poly_sub(a: CData, b: CData, out: CData, moduli, worker=None):
    _check_shapes(out, a, b)
    q = _q_col(moduli, out)
    if worker is None:
        out.view()[:] = sub_arr(a.view(), b.view(), q)
    else:
        av, bv, ov = a.view(), b.view(), out.view()

        def mk(j):
            qj = q[0, j, 0]

            def task():
                ov[:, j] = sub_arr(av[:, j], bv[:, j], qj)
            return task

        par_for_each_modulus(worker, [mk(j) for j in range(out.size_modulus)])
    _same_domains(out, a)


def poly_negate(a: CData, out: CData, moduli, worker=None):
    _check_shapes(out, a)
    q = _q_col(moduli, out)
    out.view()[:] = neg_arr(a.view(), q)
    _same_domains(out, a)


def _rows_mul(a: CData, b: CData, out: CData, moduli, negate: bool = False,
              addend: CData | None = None):
    cc = chain_constants(moduli)
    ar, br, orows = a.rows(), b.rows(), out.rows()
    midx = a.mod_idx()
    if _kernels is not None:
        midx = np.ascontiguousarray(midx, dtype=np.int64)
        ac = np.ascontiguousarray(ar)
        bc = np.ascontiguousarray(br)
        if addend is not None:
            _kernels.mul_add_batch(ac, bc, np.ascontiguousarray(addend.rows()),
                                   orows, cc.q, cc.qinv, cc.r2, midx)
        elif negate:
            _kernels.neg_mul_batch(ac, bc, orows, cc.q, cc.qinv, cc.r2, midx)
        else:
            _kernels.mul_batch(ac, bc, orows, cc.q, cc.qinv, cc.r2, midx)
        return
    q = cc.q[midx].reshape(-1, 1)
    qinv = cc.qinv[midx].reshape(-1, 1)
    r2 = cc.r2[midx].reshape(-1, 1)
    prod = mul_arr(ar, br, q, qinv, r2)
    if addend is not None:
        prod = add_arr(prod, addend.rows(), q)
    elif negate:
        prod = neg_arr(prod, q)
    orows[:] = prod


def poly_mul_pointwise(a: CData, b: CData, out: CData, moduli):
    """out = a (.) b per residue; evaluation domain only."""
    _check_shapes(out, a, b)
    _check_domain(Domain.EVALUATION, a, b)
    _rows_mul(a, b, out, moduli)
    out.domains = [Domain.EVALUATION] * out.size_poly


def fused_neg_multiply(a: CData, b: CData, out: CData, moduli):
    """out = -(a (.) b) in one pass; bit-identical to negate(mul(a, b))."""
    _check_shapes(out, a, b)
    _check_domain(Domain.EVALUATION, a, b)
    _rows_mul(a, b, out, moduli, negate=True)
    out.domains = [Domain.EVALUATION] * out.size_poly


def fused_mul_add(a: CData, b: CData, c: CData, out: CData, moduli):
    """out = a (.) b + c in one pass; bit-identical to add(mul(a, b), c)."""
    _check_shapes(out, a, b, c)
    _check_domain(Domain.EVALUATION, a, b, c)
    _rows_mul(a, b, out, moduli, addend=c)
    out.domains = [Domain.EVALUATION] * out.size_poly


def poly_to_eval(cd: CData, chain: NttChain):
    """In-place forward NTT of every residue row still in coefficient form."""
    for p in range(cd.size_poly):
        if cd.domains[p] is Domain.COEFFICIENT:
            v = cd.view()
            v[p] = chain.forward(v[p], np.arange(cd.size_modulus))
            cd.domains[p] = Domain.EVALUATION


def poly_to_coeff(cd: CData, chain: NttChain):
    """In-place inverse NTT of every residue row in evaluation form."""
    for p in range(cd.size_poly):
        if cd.domains[p] is Domain.EVALUATION:
            v = cd.view()
            v[p] = chain.inverse(v[p], np.arange(cd.size_modulus))
            cd.domains[p] = Domain.COEFFICIENT


def poly_negacyclic_mul(a: CData, b: CData, out: CData, chain: NttChain, moduli):
    """out = a * b mod (X^n + 1, q_j), coefficient domain in and out."""
    _check_shapes(out, a, b)
    _check_domain(Domain.COEFFICIENT, a, b)
    midx = a.mod_idx()
    fa = chain.forward(a.rows(), midx)
    fb = chain.forward(b.rows(), midx)
    cc = chain_constants(moduli)
    if _kernels is not None:
        prod = np.empty_like(fa)
        _kernels.mul_batch(fa, fb, prod, cc.q, cc.qinv, cc.r2,
                           np.ascontiguousarray(midx, dtype=np.int64))
    else:
        q = cc.q[midx].reshape(-1, 1)
        prod = mul_arr(fa, fb, q, cc.qinv[midx].reshape(-1, 1),
                       cc.r2[midx].reshape(-1, 1))
    out.rows()[:] = chain.inverse(prod, midx)
    out.domains = [Domain.COEFFICIENT] * out.size_poly

"""BEHZ full-RNS machinery for BFV multiplication.

Everything stays in word-sized residues: operands are lifted from the
ciphertext base q to an auxiliary base B union {m_sk} by fast (approximate)
base conversion, the m_tilde-redundancy trick removes the q-overflows the
approximation introduces, the tensor products are computed in the joint
base, scaled by t with a fast floor by Q, and converted exactly back to q
with the Shenoy-Kumaresan m_sk correction.
"""

from __future__ import annotations

import numpy as np

from ..context import Context
from ..coremath.modmath import Modulus, inv_mod
from ..coremath.ntt import NttChain, NttTables
from ..coremath.primes import gen_ntt_prime_chain
from ..coremath.vecmod import add_arr, mul_arr, sub_arr
from ..rnspoly import chain_constants

try:
    from ..coremath import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

_U64 = np.uint64

M_TILDE_BITS = 16
M_TILDE = 1 << M_TILDE_BITS
_MASK_MT = _U64(M_TILDE - 1)

AUX_PRIME_BITS = 50


def _mul_rows(rows_x, rows_y, values):
    """Element-wise modular product; ``values`` lists the modulus per row."""
    cc = chain_constants(values)
    midx = np.arange(len(values), dtype=np.int64)
    if _kernels is not None:
        out = np.empty_like(rows_x)
        _kernels.mul_batch(np.ascontiguousarray(rows_x),
                           np.ascontiguousarray(rows_y), out,
                           cc.q, cc.qinv, cc.r2, midx)
        return out
    q = cc.q.reshape(-1, 1)
    return mul_arr(rows_x, rows_y, q, cc.qinv.reshape(-1, 1), cc.r2.reshape(-1, 1))


def _mul_row_consts(rows, consts, values):
    """rows[j] * consts[j] mod values[j] with scalar per-row constants."""
    y = np.broadcast_to(
        np.asarray(consts, dtype=_U64).reshape(-1, 1), rows.shape
    )
    return _mul_rows(rows, np.ascontiguousarray(y), values)


class BehzConstants:
    """Per-level precompute for the BEHZ pipeline."""

    def __init__(self, ctx: Context, level: int):
        self.level = level
        base = ctx.bases[level]
        self.q_values = base.values
        self.q_prod = base.product
        n = ctx.n
        t = ctx.plain_modulus.value
        # Auxiliary base: enough 50-bit primes that Pi(B) comfortably exceeds
        # the tensor-intermediate bound ~ n^2 * t * Q, plus m_sk.
        need_bits = self.q_prod.bit_length() + 2 * n.bit_length() + t.bit_length() + 8
        k_aux = -(-need_bits // AUX_PRIME_BITS)
        exclude = set(self.q_values) | {t}
        aux = gen_ntt_prime_chain(AUX_PRIME_BITS, n, k_aux + 1,
                                  extra_exclude=exclude)
        self.b_values = [m.value for m in aux[:-1]]
        self.m_sk = aux[-1].value
        self.bsk_values = self.b_values + [self.m_sk]
        self.big_values = self.q_values + self.bsk_values
        self.b_prod = 1
        for v in self.b_values:
            self.b_prod *= v

        # q -> (Bsk, m_tilde) conversion weights
        self.inv_punc_q = np.array(
            [base.punctured_inv[j] for j in range(level)], dtype=_U64
        )
        self.punc_q_mod = {
            m: np.array([base.punctured[j] % m for j in range(level)], dtype=_U64)
            for m in self.bsk_values + [M_TILDE]
        }
        self.q_mod = {m: self.q_prod % m for m in self.bsk_values}
        self.neg_q_inv_mtilde = pow(-self.q_prod, -1, M_TILDE)
        self.mtilde_inv_mod = {
            m: inv_mod(M_TILDE % m, Modulus(m)) for m in self.bsk_values
        }
        # fast floor: q^{-1} mod each Bsk prime
        self.q_inv_mod = {
            m: inv_mod(self.q_prod % m, Modulus(m)) for m in self.bsk_values
        }
        # B -> (q, m_sk) conversion
        punc_b = [self.b_prod // v for v in self.b_values]
        self.inv_punc_b = np.array(
            [inv_mod(punc_b[i] % v, Modulus(v)) for i, v in enumerate(self.b_values)],
            dtype=_U64,
        )
        self.punc_b_mod = {
            m: np.array([p % m for p in punc_b], dtype=_U64)
            for m in self.q_values + [self.m_sk]
        }
        self.b_mod_msk = self.b_prod % self.m_sk
        self.inv_b_msk = inv_mod(self.b_mod_msk, Modulus(self.m_sk))
        self.b_mod_q = {m: self.b_prod % m for m in self.q_values}

        # NTT tables over the joint base for the tensor stage
        q_tables = ctx.ntt_tables[:level]
        aux_tables = [NttTables(n, m) for m in aux]
        self.big_chain = NttChain(q_tables + aux_tables)
        self.t = t


_behz_cache: dict[tuple, BehzConstants] = {}


def behz_constants(ctx: Context, level: int) -> BehzConstants:
    key = (id(ctx), level)
    if key not in _behz_cache:
        _behz_cache[key] = BehzConstants(ctx, level)
    return _behz_cache[key]


def _conv_sums(ys, weights_per_dst, dst_values):
    """Sum_j ys[j] * w[j] mod m for each destination modulus m.

    ys rows are reduced residues of the source base (arbitrary < 2^61)."""
    out = np.empty((len(dst_values), ys.shape[1]), dtype=_U64)
    for d, m in enumerate(dst_values):
        cc = chain_constants([m])
        mm = cc.q[0]
        r = ys % mm
        w = np.broadcast_to(weights_per_dst[m].reshape(-1, 1), r.shape)
        prods = mul_arr(r, w, mm, cc.qinv[0], cc.r2[0])
        acc = prods[0]
        for j in range(1, prods.shape[0]):
            acc = add_arr(acc, prods[j], mm)
        out[d] = acc
    return out


def fast_base_conv_q(consts: BehzConstants, rows_q, dst_values):
    """FastBConv of a base-q polynomial onto ``dst_values`` (approximate:
    result may carry an extra alpha*q, alpha <= level)."""
    ys = _mul_row_consts(rows_q, consts.inv_punc_q, consts.q_values)
    return _conv_sums(ys, consts.punc_q_mod, dst_values)


def _conv_q_to_mtilde(consts: BehzConstants, rows_q):
    ys = _mul_row_consts(rows_q, consts.inv_punc_q, consts.q_values)
    w = consts.punc_q_mod[M_TILDE].reshape(-1, 1)
    return ((ys & _MASK_MT) * w).sum(axis=0) & _MASK_MT


def extend_to_bsk(consts: BehzConstants, rows_q):
    """Lift a base-q polynomial to Bsk exactly (mod Q) via the m_tilde trick.
    Returns (len(Bsk), n) rows."""
    mt = _U64(M_TILDE)
    # multiply by m_tilde in base q
    scaled = _mul_row_consts(
        rows_q,
        [(M_TILDE % m) for m in consts.q_values],
        consts.q_values,
    )
    tilde_bsk = fast_base_conv_q(consts, scaled, consts.bsk_values)
    tilde_mt = _conv_q_to_mtilde(consts, scaled)
    # r = [tilde_mt * (-Q)^{-1}] mod m_tilde, centered
    r = (tilde_mt * _U64(consts.neg_q_inv_mtilde)) & _MASK_MT
    r_signed = r.astype(np.int64)
    r_signed[r_signed >= M_TILDE // 2] -= M_TILDE
    out = np.empty_like(tilde_bsk)
    for d, m in enumerate(consts.bsk_values):
        rm = np.mod(r_signed, np.int64(m)).astype(_U64)
        qr = _mul_rows(rm[None, :], np.full((1, rm.size), consts.q_mod[m], dtype=_U64),
                       [m])[0]
        s = add_arr(tilde_bsk[d], qr, _U64(m))
        out[d] = _mul_rows(
            s[None, :],
            np.full((1, s.size), consts.mtilde_inv_mod[m], dtype=_U64),
            [m],
        )[0]
    return out


def fast_floor_q(consts: BehzConstants, rows_q, rows_bsk):
    """floor(x / Q) in base Bsk, given x's residues in q and Bsk (x = t * tensor
    product here).  Approximate within a small additive alpha."""
    conv = fast_base_conv_q(consts, rows_q, consts.bsk_values)
    out = np.empty_like(rows_bsk)
    for d, m in enumerate(consts.bsk_values):
        mm = _U64(m)
        diff = sub_arr(rows_bsk[d], conv[d], mm)
        out[d] = _mul_rows(
            diff[None, :],
            np.full((1, diff.size), consts.q_inv_mod[m], dtype=_U64),
            [m],
        )[0]
    return out


def fast_conv_sk_to_q(consts: BehzConstants, rows_bsk):
    """Exact Bsk -> q conversion (Shenoy-Kumaresan with the m_sk anchor)."""
    k_b = len(consts.b_values)
    rows_b = rows_bsk[:k_b]
    row_msk = rows_bsk[k_b]
    ys = _mul_row_consts(rows_b, consts.inv_punc_b, consts.b_values)
    conv_q = _conv_sums(ys, consts.punc_b_mod, consts.q_values)
    conv_msk = _conv_sums(ys, consts.punc_b_mod, [consts.m_sk])[0]
    msk = _U64(consts.m_sk)
    alpha = _mul_rows(
        sub_arr(conv_msk, row_msk, msk)[None, :],
        np.full((1, row_msk.size), consts.inv_b_msk, dtype=_U64),
        [consts.m_sk],
    )[0]
    # center alpha in (-m_sk/2, m_sk/2]
    a_signed = alpha.astype(np.int64)
    a_signed[a_signed > consts.m_sk // 2] -= consts.m_sk
    out = np.empty((len(consts.q_values), row_msk.size), dtype=_U64)
    for d, m in enumerate(consts.q_values):
        mm = _U64(m)
        am = np.mod(a_signed, np.int64(m)).astype(_U64)
        corr = _mul_rows(
            am[None, :], np.full((1, am.size), consts.b_mod_q[m], dtype=_U64), [m]
        )[0]
        out[d] = sub_arr(conv_q[d], corr, mm)
    return out


def behz_tensor(ctx: Context, consts: BehzConstants, ct_a, ct_b):
    """Full BEHZ product of two 2-component coefficient-domain ciphertexts.

    ct_a/ct_b: (2, level, n) residue arrays.  Returns (3, level, n) rows of
    the scaled tensor round(t * (a tensor b) / Q) in base q.
    """
    level, n = consts.level, ct_a.shape[2]
    k_big = len(consts.big_values)
    midx_big = np.arange(k_big, dtype=np.int64)

    def lift(poly_q):
        bsk = extend_to_bsk(consts, poly_q)
        return np.concatenate([poly_q, bsk], axis=0)

    a0, a1 = lift(ct_a[0]), lift(ct_a[1])
    b0, b1 = lift(ct_b[0]), lift(ct_b[1])
    fa0 = consts.big_chain.forward(a0, midx_big)
    fa1 = consts.big_chain.forward(a1, midx_big)
    fb0 = consts.big_chain.forward(b0, midx_big)
    fb1 = consts.big_chain.forward(b1, midx_big)
    big = consts.big_values
    e0 = _mul_rows(fa0, fb0, big)
    cross = add_arr(
        _mul_rows(fa0, fb1, big), _mul_rows(fa1, fb0, big),
        chain_constants(big).q.reshape(-1, 1),
    )
    e2 = _mul_rows(fa1, fb1, big)
    out_rows = []
    t_consts = [consts.t % m for m in big]
    for tensor in (e0, cross, e2):
        coeff = consts.big_chain.inverse(tensor, midx_big)
        scaled = _mul_row_consts(coeff, t_consts, big)
        floored = fast_floor_q(consts, scaled[:level], scaled[level:])
        out_rows.append(fast_conv_sk_to_q(consts, floored))
    return np.stack(out_rows)

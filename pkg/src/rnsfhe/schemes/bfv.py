"""BFV: exact integer arithmetic with scale-invariant Delta = floor(Q/t)
message embedding and BEHZ RNS multiplication.

Ciphertexts are kept in the coefficient domain (the BEHZ pipeline works on
coefficients); rotations and relinearization transform to the evaluation
domain transiently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..context import Context
from ..coremath.crt import crt_reconstruct_poly
from ..coremath.modmath import ParameterError
from ..coremath.sampling import Rng, fresh_seed, signed_to_residues
from ..coremath.vecmod import add_arr, sub_arr
from ..keys import KSwitchKey, PublicKey, SecretKey, key_switch
from ..rnspoly import CData, Domain, cdata_new
from .batching import IntPlaintext, batch_encode
from .behz import _mul_rows, behz_constants, behz_tensor

_U64 = np.uint64


@dataclass
class BfvCiphertext:
    data: CData       # coefficient domain, 2 or 3 polys
    level: int

    def copy(self) -> "BfvCiphertext":
        return BfvCiphertext(self.data.copy(), self.level)


_delta_cache: dict[tuple, np.ndarray] = {}


def _delta_rows(ctx: Context, level: int) -> np.ndarray:
    """floor(Q_level / t) as residues against each chain prime."""
    key = (id(ctx), level)
    if key not in _delta_cache:
        delta = ctx.level_product(level) // ctx.plain_modulus.value
        _delta_cache[key] = np.array(
            [delta % q for q in ctx.q_values[:level]], dtype=_U64
        )
    return _delta_cache[key]


def _nc_mul_eval(ctx: Context, eval_rows, other_eval, level):
    return _mul_rows(eval_rows, other_eval, ctx.q_values[:level])


def bfv_encrypt(ctx: Context, pt: IntPlaintext, pk: PublicKey,
                rng: Rng | None = None) -> BfvCiphertext:
    rng = rng or Rng(fresh_seed())
    level = ctx.params.level_count
    n = ctx.n
    midx = np.arange(level)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    u = ctx.ntt_chain.forward(
        signed_to_residues(rng.ternary(n), ctx.q_arr(level)), midx
    )
    pkv = pk.data.view()
    c0 = ctx.ntt_chain.inverse(
        _nc_mul_eval(ctx, pkv[0, :level], u, level), midx
    )
    c1 = ctx.ntt_chain.inverse(
        _nc_mul_eval(ctx, pkv[1, :level], u, level), midx
    )
    e0 = signed_to_residues(rng.cbd_error(n), ctx.q_arr(level))
    e1 = signed_to_residues(rng.cbd_error(n), ctx.q_arr(level))
    # Delta * m per residue
    m = pt.data.view()[0, 0]
    delta = _delta_rows(ctx, level).reshape(-1, 1)
    dm = _mul_rows(np.broadcast_to(m, (level, n)).copy(),
                   np.broadcast_to(delta, (level, n)).copy(),
                   ctx.q_values[:level])
    c0 = add_arr(add_arr(c0, e0, q_col), dm, q_col)
    c1 = add_arr(c1, e1, q_col)
    cd = cdata_new(ctx.pool, 2, level, n)
    cd.view()[0] = c0
    cd.view()[1] = c1
    return BfvCiphertext(data=cd, level=level)


def _raw_decrypt(ctx: Context, ct: BfvCiphertext, sk: SecretKey) -> list[int]:
    """CRT-lift of c0 + c1 s (+ c2 s^2) to big integers in [0, Q)."""
    level, n = ct.level, ctx.n
    midx = np.arange(level)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    s = sk.s.view()[0, :level]
    acc = ctx.ntt_chain.forward(v[0].copy(), midx)
    s_pow = s
    for p in range(1, ct.data.size_poly):
        cp = ctx.ntt_chain.forward(v[p].copy(), midx)
        acc = add_arr(acc, _nc_mul_eval(ctx, cp, s_pow, level), q_col)
        if p + 1 < ct.data.size_poly:
            s_pow = _mul_rows(s_pow, s, ctx.q_values[:level])
    coeff = ctx.ntt_chain.inverse(acc, midx)
    return crt_reconstruct_poly(coeff, ctx.bases[level])


def bfv_decrypt(ctx: Context, ct: BfvCiphertext, sk: SecretKey) -> IntPlaintext:
    t = ctx.plain_modulus.value
    q = ctx.level_product(ct.level)
    lifted = _raw_decrypt(ctx, ct, sk)
    out = np.empty(ctx.n, dtype=_U64)
    for i, v in enumerate(lifted):
        if v > q // 2:
            v -= q
        out[i] = ((t * v + q // 2) // q) % t
    cd = cdata_new(ctx.pool, 1, 1, ctx.n)
    cd.view()[0, 0] = out
    return IntPlaintext(data=cd, batched=True)


def noise_budget(ctx: Context, ct: BfvCiphertext, sk: SecretKey) -> float:
    """Bits of headroom: log2(Q/(2t)) - log2 ||noise||_inf, floored at 0."""
    t = ctx.plain_modulus.value
    q = ctx.level_product(ct.level)
    lifted = _raw_decrypt(ctx, ct, sk)
    worst = 1
    for v in lifted:
        if v > q // 2:
            v -= q
        m = ((t * v + q // 2) // q) % t
        e = v - (q * m + t // 2) // t
        e = ((e + q // 2) % q) - q // 2
        worst = max(worst, abs(e))
    import math

    return max(0.0, math.log2(q / (2 * t)) - math.log2(worst))


def _check_level(a: BfvCiphertext, b: BfvCiphertext):
    if a.level != b.level:
        raise ParameterError(f"level mismatch {a.level} != {b.level}")


def bfv_add(ctx: Context, a: BfvCiphertext, b: BfvCiphertext) -> BfvCiphertext:
    _check_level(a, b)
    p = max(a.data.size_poly, b.data.size_poly)
    out = cdata_new(ctx.pool, p, a.level, ctx.n)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    for i in range(p):
        if i < a.data.size_poly and i < b.data.size_poly:
            out.view()[i] = add_arr(a.data.view()[i], b.data.view()[i], q_col)
        elif i < a.data.size_poly:
            out.view()[i] = a.data.view()[i]
        else:
            out.view()[i] = b.data.view()[i]
    return BfvCiphertext(out, a.level)


def bfv_sub(ctx: Context, a: BfvCiphertext, b: BfvCiphertext) -> BfvCiphertext:
    _check_level(a, b)
    out = cdata_new(ctx.pool, a.data.size_poly, a.level, ctx.n)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    out.view()[:] = sub_arr(a.data.view(), b.data.view(), q_col)
    return BfvCiphertext(out, a.level)


def bfv_multiply(ctx: Context, a: BfvCiphertext, b: BfvCiphertext) -> BfvCiphertext:
    _check_level(a, b)
    if a.data.size_poly != 2 or b.data.size_poly != 2:
        raise ParameterError("bfv multiply requires 2-component operands")
    consts = behz_constants(ctx, a.level)
    rows = behz_tensor(ctx, consts, a.data.view(), b.data.view())
    out = cdata_new(ctx.pool, 3, a.level, ctx.n)
    out.view()[:] = rows
    return BfvCiphertext(out, a.level)


def bfv_square(ctx: Context, a: BfvCiphertext) -> BfvCiphertext:
    return bfv_multiply(ctx, a, a)


def bfv_multiply_plain(ctx: Context, a: BfvCiphertext, pt: IntPlaintext) -> BfvCiphertext:
    level, n = a.level, ctx.n
    midx = np.arange(level)
    m = pt.data.view()[0, 0]
    m_rows = np.broadcast_to(m, (level, n)) % ctx.chain_consts.q[:level].reshape(-1, 1)
    m_eval = ctx.ntt_chain.forward(np.ascontiguousarray(m_rows), midx)
    out = cdata_new(ctx.pool, a.data.size_poly, level, n)
    for p in range(a.data.size_poly):
        ev = ctx.ntt_chain.forward(a.data.view()[p].copy(), midx)
        out.view()[p] = ctx.ntt_chain.inverse(
            _mul_rows(ev, m_eval, ctx.q_values[:level]), midx
        )
    return BfvCiphertext(out, level)


def bfv_relinearize(ctx: Context, ct: BfvCiphertext, rlk: KSwitchKey) -> BfvCiphertext:
    if ct.data.size_poly != 3:
        raise ParameterError("relinearize expects a 3-component ciphertext")
    level = ct.level
    midx = np.arange(level)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    c2_eval = ctx.ntt_chain.forward(v[2].copy(), midx)
    b, a = key_switch(ctx, c2_eval, rlk)
    out = cdata_new(ctx.pool, 2, level, ctx.n)
    out.view()[0] = add_arr(v[0], ctx.ntt_chain.inverse(b, midx), q_col)
    out.view()[1] = add_arr(v[1], ctx.ntt_chain.inverse(a, midx), q_col)
    return BfvCiphertext(out, level)


def _apply_galois_coeff(ctx: Context, ct: BfvCiphertext, elt: int, gks) -> BfvCiphertext:
    if ct.data.size_poly != 2:
        raise ParameterError("rotate expects a 2-component ciphertext")
    ksk = gks.for_elt(elt)
    level = ct.level
    midx = np.arange(level)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    perm = ctx.galois_perm(elt)
    v = ct.data.view()
    c0 = ctx.ntt_chain.forward(v[0].copy(), midx)[:, perm]
    c1 = ctx.ntt_chain.forward(v[1].copy(), midx)[:, perm]
    b, a = key_switch(ctx, c1, ksk)
    out = cdata_new(ctx.pool, 2, level, ctx.n)
    out.view()[0] = ctx.ntt_chain.inverse(add_arr(c0, b, q_col), midx)
    out.view()[1] = ctx.ntt_chain.inverse(a, midx)
    return BfvCiphertext(out, level)


def bfv_rotate_rows(ctx: Context, ct: BfvCiphertext, step: int, gks) -> BfvCiphertext:
    """Rotate both batching rows cyclically left by ``step``."""
    return _apply_galois_coeff(ctx, ct, ctx.galois_elt_for_step(step), gks)


def bfv_rotate_columns(ctx: Context, ct: BfvCiphertext, gks) -> BfvCiphertext:
    """Swap the two batching rows."""
    return _apply_galois_coeff(ctx, ct, ctx.conj_elt, gks)


def bfv_encrypt_ints(ctx: Context, values, pk: PublicKey,
                     rng: Rng | None = None) -> BfvCiphertext:
    return bfv_encrypt(ctx, batch_encode(ctx, values), pk, rng)

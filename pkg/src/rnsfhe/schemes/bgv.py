"""BGV: exact integer arithmetic with least-significant-digit noise (t * e)
and explicit modulus switching.

Ciphertexts live in the evaluation domain.  Modulus switching divides by the
last chain prime while staying in the plaintext's residue class mod t; the
factor q_last^{-1} this applies to the message is tracked per ciphertext in
``plain_factor`` and undone at decryption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..context import Context
from ..coremath.crt import crt_reconstruct_poly
from ..coremath.modmath import ParameterError, inv_mod
from ..coremath.sampling import Rng, fresh_seed, signed_to_residues
from ..coremath.vecmod import add_arr, shoup_precompute, shoup_mul_arr, sub_arr
from ..keys import KSwitchKey, PublicKey, SecretKey, key_switch
from ..rnspoly import CData, Domain, cdata_new
from .batching import IntPlaintext, batch_encode
from .behz import _mul_rows

_U64 = np.uint64


@dataclass
class BgvCiphertext:
    data: CData            # evaluation domain, 2 or 3 polys
    level: int
    plain_factor: int = 1  # decrypt yields plain_factor * m; undone at decrypt

    def copy(self) -> "BgvCiphertext":
        return BgvCiphertext(self.data.copy(), self.level, self.plain_factor)


def _lift_plain(ctx: Context, m: np.ndarray, level: int) -> np.ndarray:
    """Coefficients mod t -> evaluation-domain rows over the chain."""
    rows = np.broadcast_to(m, (level, ctx.n)) % ctx.chain_consts.q[:level].reshape(-1, 1)
    return ctx.ntt_chain.forward(np.ascontiguousarray(rows), np.arange(level))


def bgv_encrypt(ctx: Context, pt: IntPlaintext, pk: PublicKey,
                rng: Rng | None = None) -> BgvCiphertext:
    rng = rng or Rng(fresh_seed())
    level, n = ctx.params.level_count, ctx.n
    t = ctx.plain_modulus.value
    midx = np.arange(level)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    u = ctx.ntt_chain.forward(
        signed_to_residues(rng.ternary(n), ctx.q_arr(level)), midx
    )
    te0 = ctx.ntt_chain.forward(
        signed_to_residues(rng.cbd_error(n) * t, ctx.q_arr(level)), midx
    )
    te1 = ctx.ntt_chain.forward(
        signed_to_residues(rng.cbd_error(n) * t, ctx.q_arr(level)), midx
    )
    pkv = pk.data.view()
    m_eval = _lift_plain(ctx, pt.data.view()[0, 0], level)
    c0 = add_arr(
        add_arr(_mul_rows(pkv[0, :level], u, ctx.q_values[:level]), te0, q_col),
        m_eval, q_col,
    )
    c1 = add_arr(_mul_rows(pkv[1, :level], u, ctx.q_values[:level]), te1, q_col)
    cd = cdata_new(ctx.pool, 2, level, n, Domain.EVALUATION)
    cd.view()[0] = c0
    cd.view()[1] = c1
    return BgvCiphertext(data=cd, level=level)


def _raw_lift(ctx: Context, ct: BgvCiphertext, sk: SecretKey) -> list[int]:
    level = ct.level
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    s = sk.s.view()[0, :level]
    acc = v[0].copy()
    s_pow = s
    for p in range(1, ct.data.size_poly):
        acc = add_arr(acc, _mul_rows(v[p], s_pow, ctx.q_values[:level]), q_col)
        if p + 1 < ct.data.size_poly:
            s_pow = _mul_rows(s_pow, s, ctx.q_values[:level])
    coeff = ctx.ntt_chain.inverse(acc, np.arange(level))
    return crt_reconstruct_poly(coeff, ctx.bases[level])


def bgv_decrypt(ctx: Context, ct: BgvCiphertext, sk: SecretKey) -> IntPlaintext:
    t = ctx.plain_modulus.value
    q = ctx.level_product(ct.level)
    inv_f = pow(ct.plain_factor % t, -1, t)
    lifted = _raw_lift(ctx, ct, sk)
    out = np.empty(ctx.n, dtype=_U64)
    for i, v in enumerate(lifted):
        if v > q // 2:
            v -= q
        out[i] = (v % t) * inv_f % t
    cd = cdata_new(ctx.pool, 1, 1, ctx.n)
    cd.view()[0, 0] = out
    return IntPlaintext(data=cd, batched=True)


def bgv_noise_budget(ctx: Context, ct: BgvCiphertext, sk: SecretKey) -> float:
    """Bits before the centered lift of c0 + c1 s wraps mod Q."""
    import math

    q = ctx.level_product(ct.level)
    worst = 1
    for v in _raw_lift(ctx, ct, sk):
        if v > q // 2:
            v -= q
        worst = max(worst, abs(v))
    return max(0.0, math.log2(q / 2) - math.log2(worst))


def _check_pair(a: BgvCiphertext, b: BgvCiphertext):
    if a.level != b.level:
        raise ParameterError(f"level mismatch {a.level} != {b.level}")


def _align_factors(ctx: Context, a: BgvCiphertext, b: BgvCiphertext):
    """Scale the smaller-factor operand so both share one plain_factor."""
    if a.plain_factor == b.plain_factor:
        return a, b, a.plain_factor
    t = ctx.plain_modulus.value

    def rescaled(ct: BgvCiphertext, mult: int) -> BgvCiphertext:
        out = ct.copy()
        level = ct.level
        rows = out.data.rows()
        consts = np.array([mult % q for q in ctx.q_values[:level]], dtype=_U64)
        consts = np.tile(consts, ct.data.size_poly).reshape(-1, 1)
        vals = list(np.tile(ctx.q_values[:level], ct.data.size_poly))
        rows[:] = _mul_rows(rows, np.ascontiguousarray(
            np.broadcast_to(consts, rows.shape)), vals)
        out.plain_factor = ct.plain_factor * mult % t
        return out

    fa, fb = a.plain_factor % t, b.plain_factor % t
    # multiply a by (fb/fa) to land on b's factor
    mult = fb * pow(fa, -1, t) % t
    return rescaled(a, mult), b, b.plain_factor


def bgv_add(ctx: Context, a: BgvCiphertext, b: BgvCiphertext) -> BgvCiphertext:
    _check_pair(a, b)
    a, b, factor = _align_factors(ctx, a, b)
    p = max(a.data.size_poly, b.data.size_poly)
    out = cdata_new(ctx.pool, p, a.level, ctx.n, Domain.EVALUATION)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    for i in range(p):
        if i < a.data.size_poly and i < b.data.size_poly:
            out.view()[i] = add_arr(a.data.view()[i], b.data.view()[i], q_col)
        elif i < a.data.size_poly:
            out.view()[i] = a.data.view()[i]
        else:
            out.view()[i] = b.data.view()[i]
    return BgvCiphertext(out, a.level, factor)


def bgv_sub(ctx: Context, a: BgvCiphertext, b: BgvCiphertext) -> BgvCiphertext:
    _check_pair(a, b)
    a, b, factor = _align_factors(ctx, a, b)
    out = cdata_new(ctx.pool, a.data.size_poly, a.level, ctx.n, Domain.EVALUATION)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    out.view()[:] = sub_arr(a.data.view(), b.data.view(), q_col)
    return BgvCiphertext(out, a.level, factor)


def bgv_multiply(ctx: Context, a: BgvCiphertext, b: BgvCiphertext) -> BgvCiphertext:
    _check_pair(a, b)
    if a.data.size_poly != 2 or b.data.size_poly != 2:
        raise ParameterError("bgv multiply requires 2-component operands")
    level, n = a.level, ctx.n
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    av, bv = a.data.view(), b.data.view()
    vals = ctx.q_values[:level]
    out = cdata_new(ctx.pool, 3, level, n, Domain.EVALUATION)
    out.view()[0] = _mul_rows(av[0], bv[0], vals)
    out.view()[1] = add_arr(
        _mul_rows(av[0], bv[1], vals), _mul_rows(av[1], bv[0], vals), q_col
    )
    out.view()[2] = _mul_rows(av[1], bv[1], vals)
    t = ctx.plain_modulus.value
    return BgvCiphertext(out, level, a.plain_factor * b.plain_factor % t)


def bgv_square(ctx: Context, a: BgvCiphertext) -> BgvCiphertext:
    return bgv_multiply(ctx, a, a)


def bgv_multiply_plain(ctx: Context, a: BgvCiphertext, pt: IntPlaintext) -> BgvCiphertext:
    level = a.level
    m_eval = _lift_plain(ctx, pt.data.view()[0, 0], level)
    out = cdata_new(ctx.pool, a.data.size_poly, level, ctx.n, Domain.EVALUATION)
    for p in range(a.data.size_poly):
        out.view()[p] = _mul_rows(a.data.view()[p], m_eval, ctx.q_values[:level])
    return BgvCiphertext(out, level, a.plain_factor)


def bgv_relinearize(ctx: Context, ct: BgvCiphertext, rlk: KSwitchKey) -> BgvCiphertext:
    if ct.data.size_poly != 3:
        raise ParameterError("relinearize expects a 3-component ciphertext")
    level = ct.level
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    b, a = key_switch(ctx, v[2], rlk)
    out = cdata_new(ctx.pool, 2, level, ctx.n, Domain.EVALUATION)
    out.view()[0] = add_arr(v[0], b, q_col)
    out.view()[1] = add_arr(v[1], a, q_col)
    return BgvCiphertext(out, level, ct.plain_factor)


def bgv_mod_switch(ctx: Context, ct: BgvCiphertext) -> BgvCiphertext:
    """Divide by the last chain prime, staying in the residue class mod t.

    The correction delta = t * centered([c * t^{-1}]_{q_last}) satisfies
    delta == c (mod q_last) and delta == 0 (mod t), so (c - delta)/q_last is
    integral and preserves the message up to the tracked q_last^{-1} factor.
    """
    level = ct.level
    if level < 2:
        raise ParameterError("mod_switch at level 1: level exhausted")
    n = ctx.n
    t = ctx.plain_modulus.value
    q_last = ctx.q_values[level - 1]
    new_level = level - 1
    midx = np.arange(level)
    new_midx = np.arange(new_level)
    q_col = ctx.chain_consts.q[:new_level].reshape(-1, 1)
    inv_t_last = inv_mod(t % q_last, ctx.moduli[level - 1])
    last_inv = ctx.last_inv[level].reshape(-1, 1)
    last_inv_sh = shoup_precompute(last_inv, q_col)
    t_mod = np.array([t % q for q in ctx.q_values[:new_level]], dtype=_U64).reshape(-1, 1)
    q_last_half = q_last // 2
    out = cdata_new(ctx.pool, ct.data.size_poly, new_level, n, Domain.EVALUATION)
    for p in range(ct.data.size_poly):
        coeff = ctx.ntt_chain.inverse(ct.data.view()[p], midx)
        last = coeff[level - 1]
        # w = [c * t^{-1}]_{q_last}, centered
        w = _mul_rows(
            last[None, :], np.full((1, n), inv_t_last, dtype=_U64), [q_last]
        )[0]
        w_signed = w.astype(np.int64)
        w_signed[w > q_last_half] -= np.int64(q_last)
        # delta = t * w per remaining prime
        delta = np.empty((new_level, n), dtype=_U64)
        for j in range(new_level):
            qj = ctx.q_values[j]
            wm = np.mod(w_signed, np.int64(qj)).astype(_U64)
            delta[j] = _mul_rows(
                wm[None, :], np.full((1, n), t % qj, dtype=_U64), [qj]
            )[0]
        diff = sub_arr(coeff[:new_level], delta, q_col)
        scaled = shoup_mul_arr(diff, np.broadcast_to(last_inv, diff.shape),
                               np.broadcast_to(last_inv_sh, diff.shape), q_col)
        out.view()[p] = ctx.ntt_chain.forward(scaled, new_midx)
    factor = ct.plain_factor * pow(q_last % t, -1, t) % t
    return BgvCiphertext(out, new_level, factor)


def _apply_galois(ctx: Context, ct: BgvCiphertext, elt: int, gks) -> BgvCiphertext:
    if ct.data.size_poly != 2:
        raise ParameterError("rotate expects a 2-component ciphertext")
    ksk = gks.for_elt(elt)
    level = ct.level
    perm = ctx.galois_perm(elt)
    v = ct.data.view()
    c0 = v[0][:, perm]
    c1 = v[1][:, perm]
    b, a = key_switch(ctx, c1, ksk)
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    out = cdata_new(ctx.pool, 2, level, ctx.n, Domain.EVALUATION)
    out.view()[0] = add_arr(c0, b, q_col)
    out.view()[1] = a
    return BgvCiphertext(out, level, ct.plain_factor)


def bgv_rotate_rows(ctx: Context, ct: BgvCiphertext, step: int, gks) -> BgvCiphertext:
    return _apply_galois(ctx, ct, ctx.galois_elt_for_step(step), gks)


def bgv_rotate_columns(ctx: Context, ct: BgvCiphertext, gks) -> BgvCiphertext:
    return _apply_galois(ctx, ct, ctx.conj_elt, gks)


def bgv_encrypt_ints(ctx: Context, values, pk: PublicKey,
                     rng: Rng | None = None) -> BgvCiphertext:
    return bgv_encrypt(ctx, batch_encode(ctx, values), pk, rng)

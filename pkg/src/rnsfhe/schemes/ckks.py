"""CKKS: approximate arithmetic over complex slot vectors.

Slots live on the power-of-5 orbit of the 2n-th roots of unity: slot j holds
m(zeta^(5^j)) with zeta = exp(i*pi/n), and the conjugate orbit carries the
mirrored values, so a real coefficient vector encodes n/2 free complex slots.
Scales are tracked as floats; rescaling by a prime leaves the scale slightly
off its power-of-two target, and binary ops accept operands whose scales
agree within a tight relative tolerance rather than demanding bit equality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..context import Context, Scheme
from ..coremath.crt import crt_reconstruct_poly
from ..coremath.modmath import ParameterError
from ..coremath.sampling import Rng, fresh_seed, signed_to_residues
from ..coremath.vecmod import add_arr, shoup_precompute, shoup_mul_arr, sub_arr
from ..keys import KSwitchKey, PublicKey, SecretKey, key_switch
from ..rnspoly import (
    CData,
    Domain,
    cdata_new,
    drop_last_modulus,
    fused_mul_add,
    poly_add,
    poly_mul_pointwise,
)

try:
    from ..coremath import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

_U64 = np.uint64

SCALE_RTOL = 1e-6  # relative agreement required of operand scales


class ScaleMismatch(ParameterError):
    pass


class LevelMismatch(ParameterError):
    pass


class EncodeRangeError(ParameterError):
    pass


@dataclass
class CkksPlaintext:
    data: CData           # 1 poly, evaluation domain
    scale: float
    level: int


@dataclass
class CkksCiphertext:
    data: CData           # 2 or 3 polys, evaluation domain
    scale: float
    level: int

    def copy(self) -> "CkksCiphertext":
        return CkksCiphertext(self.data.copy(), self.scale, self.level)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def _slot_index(n: int) -> np.ndarray:
    """k with 2k+1 == 5^j mod 2n, for j = 0..n/2-1."""
    half = n // 2
    e = np.empty(half, dtype=np.int64)
    cur = 1
    for j in range(half):
        e[j] = (cur - 1) // 2
        cur = cur * 5 % (2 * n)
    return e


_slot_cache: dict[int, np.ndarray] = {}
_twist_cache: dict[int, np.ndarray] = {}


def _slots(n: int) -> np.ndarray:
    if n not in _slot_cache:
        _slot_cache[n] = _slot_index(n)
    return _slot_cache[n]


def _twist(n: int) -> np.ndarray:
    # zeta^i for i in [0, n), zeta = exp(i*pi/n)
    if n not in _twist_cache:
        _twist_cache[n] = np.exp(1j * np.pi * np.arange(n) / n)
    return _twist_cache[n]


def embed_inverse(values: np.ndarray, n: int) -> np.ndarray:
    """Complex slot vector (n/2) -> real coefficient vector (n)."""
    half = n // 2
    u = np.zeros(n, dtype=np.complex128)
    idx = _slots(n)
    u[idx] = values
    u[(n - 1 - idx)] = np.conj(values)  # exponent 2n - 5^j has k = n-1-k_j
    b = np.fft.fft(u) / n
    return (b * np.conj(_twist(n))).real


def embed_forward(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Real coefficient vector (n) -> complex slot vector (n/2)."""
    b = coeffs.astype(np.complex128) * _twist(n)
    u = np.fft.ifft(b) * n
    return u[_slots(n)]


def ckks_encode(ctx: Context, values, scale: float | None = None,
                level: int | None = None) -> CkksPlaintext:
    n = ctx.n
    half = n // 2
    level = level or ctx.params.level_count
    scale = scale or ctx.params.default_scale
    v = np.asarray(values, dtype=np.complex128).ravel()
    if v.size > half:
        raise ParameterError(f"{v.size} values exceed {half} slots")
    if v.size < half:
        v = np.concatenate([v, np.zeros(half - v.size, dtype=np.complex128)])
    coeffs = embed_inverse(v, n) * scale
    peak = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    budget = ctx.level_product(level)
    if peak * 2 >= budget:
        raise EncodeRangeError(
            f"scaled magnitude 2^{np.log2(max(peak, 1)):.1f} exceeds the "
            f"2^{budget.bit_length() - 1} modulus budget at level {level}"
        )
    rounded = _round_half_away(coeffs)
    if peak < 2.0 ** 62:
        rows = signed_to_residues(rounded.astype(np.int64), ctx.q_arr(level))
    else:
        # beyond int64: residues via exact python integers
        big = [int(v) for v in rounded]
        rows = np.stack([
            np.array([v % int(q) for v in big], dtype=np.uint64)
            for q in ctx.q_arr(level)
        ])
    cd = cdata_new(ctx.pool, 1, level, n)
    cd.view()[0] = ctx.ntt_chain.forward(rows, np.arange(level))
    cd.domains = [Domain.EVALUATION]
    return CkksPlaintext(data=cd, scale=float(scale), level=level)


def ckks_decode(ctx: Context, pt: CkksPlaintext) -> np.ndarray:
    level = pt.level
    rows = ctx.ntt_chain.inverse(pt.data.view()[0], np.arange(level))
    base = ctx.bases[level]
    q = base.product
    lifted = crt_reconstruct_poly(rows, base)
    centered = np.array(
        [float(v - q) if v > q // 2 else float(v) for v in lifted]
    )
    return embed_forward(centered / pt.scale, ctx.n)


# ---------------------------------------------------------------------------


def _mul_rows(ctx: Context, x: np.ndarray, y: np.ndarray, level: int) -> np.ndarray:
    cc = ctx.chain_consts
    midx = np.tile(np.arange(level, dtype=np.int64), x.shape[0] // level or 1)
    if x.ndim == 2 and x.shape[0] == level:
        midx = np.arange(level, dtype=np.int64)
    out = np.empty_like(x)
    if _kernels is not None:
        _kernels.mul_batch(np.ascontiguousarray(x), np.ascontiguousarray(y),
                           out, cc.q, cc.qinv, cc.r2, midx)
    else:
        from ..coremath.vecmod import mul_arr

        q = cc.q[midx].reshape(-1, 1)
        out = mul_arr(x, y, q, cc.qinv[midx].reshape(-1, 1),
                      cc.r2[midx].reshape(-1, 1))
    return out


def ckks_encrypt(ctx: Context, pt: CkksPlaintext, pk: PublicKey,
                 rng: Rng | None = None) -> CkksCiphertext:
    rng = rng or Rng(fresh_seed())
    level, n = pt.level, ctx.n
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    u = ctx.ntt_chain.forward(
        signed_to_residues(rng.ternary(n), ctx.q_arr(level)), np.arange(level)
    )
    e0 = ctx.ntt_chain.forward(
        signed_to_residues(rng.cbd_error(n), ctx.q_arr(level)), np.arange(level)
    )
    e1 = ctx.ntt_chain.forward(
        signed_to_residues(rng.cbd_error(n), ctx.q_arr(level)), np.arange(level)
    )
    pkv = pk.data.view()
    c0 = add_arr(
        add_arr(_mul_rows(ctx, pkv[0, :level], u, level), e0, q_col),
        pt.data.view()[0], q_col,
    )
    c1 = add_arr(_mul_rows(ctx, pkv[1, :level], u, level), e1, q_col)
    cd = cdata_new(ctx.pool, 2, level, n, Domain.EVALUATION)
    cd.view()[0] = c0
    cd.view()[1] = c1
    return CkksCiphertext(data=cd, scale=pt.scale, level=level)


def ckks_decrypt(ctx: Context, ct: CkksCiphertext, sk: SecretKey) -> CkksPlaintext:
    level = ct.level
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    s = sk.s.view()[0, :level]
    acc = v[0].copy()
    s_pow = s
    for p in range(1, ct.data.size_poly):
        acc = add_arr(acc, _mul_rows(ctx, v[p], s_pow, level), q_col)
        if p + 1 < ct.data.size_poly:
            s_pow = _mul_rows(ctx, s_pow, s, level)
    cd = cdata_new(ctx.pool, 1, level, ctx.n, Domain.EVALUATION)
    cd.view()[0] = acc
    return CkksPlaintext(data=cd, scale=ct.scale, level=level)


# ---------------------------------------------------------------------------


def _check_pair(a, b):
    if a.level != b.level:
        raise LevelMismatch(f"levels {a.level} != {b.level}")


def _check_scales(a, b):
    if abs(a.scale - b.scale) > SCALE_RTOL * max(a.scale, b.scale):
        raise ScaleMismatch(f"scales {a.scale} and {b.scale} differ")


def ckks_add(ctx: Context, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
    _check_pair(a, b)
    _check_scales(a, b)
    p = max(a.data.size_poly, b.data.size_poly)
    out = cdata_new(ctx.pool, p, a.level, ctx.n, Domain.EVALUATION)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    av, bv, ov = a.data.view(), b.data.view(), out.view()
    for i in range(p):
        x = av[i] if i < a.data.size_poly else 0
        y = bv[i] if i < b.data.size_poly else 0
        if i < a.data.size_poly and i < b.data.size_poly:
            ov[i] = add_arr(av[i], bv[i], q_col)
        else:
            ov[i] = x if i < a.data.size_poly else y
    return CkksCiphertext(out, a.scale, a.level)


def ckks_sub(ctx: Context, a: CkksCiphertext, b: CkksCiphertext) -> CkksCiphertext:
    _check_pair(a, b)
    _check_scales(a, b)
    if a.data.size_poly != b.data.size_poly:
        raise ParameterError("component-count mismatch in sub")
    out = cdata_new(ctx.pool, a.data.size_poly, a.level, ctx.n, Domain.EVALUATION)
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    out.view()[:] = sub_arr(a.data.view(), b.data.view(), q_col)
    return CkksCiphertext(out, a.scale, a.level)


def ckks_add_plain(ctx: Context, a: CkksCiphertext, pt: CkksPlaintext) -> CkksCiphertext:
    _check_pair(a, pt)
    _check_scales(a, pt)
    out = a.copy()
    q_col = ctx.chain_consts.q[: a.level].reshape(-1, 1)
    out.data.view()[0] = add_arr(out.data.view()[0], pt.data.view()[0], q_col)
    return out


def ckks_multiply_plain(ctx: Context, a: CkksCiphertext, pt: CkksPlaintext) -> CkksCiphertext:
    _check_pair(a, pt)
    out = cdata_new(ctx.pool, a.data.size_poly, a.level, ctx.n, Domain.EVALUATION)
    av, ov = a.data.view(), out.view()
    for p in range(a.data.size_poly):
        ov[p] = _mul_rows(ctx, av[p], pt.data.view()[0], a.level)
    return CkksCiphertext(out, a.scale * pt.scale, a.level)


def ckks_multiply_scalar(ctx: Context, a: CkksCiphertext, z: complex,
                         scale: float | None = None) -> CkksCiphertext:
    """Multiply every slot by one complex scalar via the two-term plaintext
    Re(z) + Im(z) * X^(n/2) (X^(n/2) evaluates to i on every slot)."""
    scale = scale or ctx.params.default_scale
    n, level = ctx.n, a.level
    coeffs = np.zeros(n)
    coeffs[0] = z.real * scale
    coeffs[n // 2] = z.imag * scale
    ints = _round_half_away(coeffs).astype(np.int64)
    rows = signed_to_residues(ints, ctx.q_arr(level))
    cd = cdata_new(ctx.pool, 1, level, n)
    cd.view()[0] = ctx.ntt_chain.forward(rows, np.arange(level))
    cd.domains = [Domain.EVALUATION]
    return ckks_multiply_plain(ctx, a, CkksPlaintext(cd, float(scale), level))


def ckks_multiply(ctx: Context, a: CkksCiphertext, b: CkksCiphertext,
                  mode: str = "fused") -> CkksCiphertext:
    """Tensor product -> 3-component ciphertext, scale multiplied.

    The cross term X0*Y1 + X1*Y0 goes through fused_mul_add in fused mode
    and through separate multiply-then-add in unfused mode; both are
    bit-identical by the fusion contract.
    """
    _check_pair(a, b)
    if a.data.size_poly != 2 or b.data.size_poly != 2:
        raise ParameterError("multiply requires 2-component operands")
    if mode not in ("fused", "unfused"):
        raise ParameterError(f"unknown multiply mode {mode!r}")
    level, n = a.level, ctx.n
    moduli = ctx.q_values[:level]

    def wrap(rows) -> CData:
        cd = cdata_new(ctx.pool, 1, level, n, Domain.EVALUATION)
        cd.view()[0] = rows
        return cd

    x0, x1 = wrap(a.data.view()[0]), wrap(a.data.view()[1])
    y0, y1 = wrap(b.data.view()[0]), wrap(b.data.view()[1])
    out = cdata_new(ctx.pool, 3, level, n, Domain.EVALUATION)
    d0, d1, d2 = wrap(out.view()[0]), wrap(out.view()[1]), wrap(out.view()[2])
    t = cdata_new(ctx.pool, 1, level, n, Domain.EVALUATION)
    poly_mul_pointwise(x0, y0, d0, moduli)
    poly_mul_pointwise(x1, y1, d2, moduli)
    poly_mul_pointwise(x1, y0, t, moduli)
    if mode == "fused":
        fused_mul_add(x0, y1, t, d1, moduli)
    else:
        u = cdata_new(ctx.pool, 1, level, n, Domain.EVALUATION)
        poly_mul_pointwise(x0, y1, u, moduli)
        poly_add(u, t, d1, moduli)
        u.free()
    out.view()[0] = d0.view()[0]
    out.view()[1] = d1.view()[0]
    out.view()[2] = d2.view()[0]
    for cd in (x0, x1, y0, y1, d0, d1, d2, t):
        cd.free()
    return CkksCiphertext(out, a.scale * b.scale, level)


def ckks_square(ctx: Context, a: CkksCiphertext) -> CkksCiphertext:
    """Square with the 3 unique sub-products; identical output to
    ckks_multiply(a, a)."""
    if a.data.size_poly != 2:
        raise ParameterError("square requires a 2-component operand")
    level = a.level
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    av = a.data.view()
    out = cdata_new(ctx.pool, 3, level, ctx.n, Domain.EVALUATION)
    ov = out.view()
    ov[0] = _mul_rows(ctx, av[0], av[0], level)
    cross = _mul_rows(ctx, av[1], av[0], level)
    ov[1] = add_arr(cross, cross, q_col)
    ov[2] = _mul_rows(ctx, av[1], av[1], level)
    return CkksCiphertext(out, a.scale * a.scale, level)


def ckks_relinearize(ctx: Context, ct: CkksCiphertext, rlk: KSwitchKey) -> CkksCiphertext:
    if ct.data.size_poly != 3:
        raise ParameterError("relinearize expects a 3-component ciphertext")
    level = ct.level
    q_col = ctx.chain_consts.q[:level].reshape(-1, 1)
    v = ct.data.view()
    b, a = key_switch(ctx, v[2], rlk)
    out = cdata_new(ctx.pool, 2, level, ctx.n, Domain.EVALUATION)
    out.view()[0] = add_arr(v[0], b, q_col)
    out.view()[1] = add_arr(v[1], a, q_col)
    return CkksCiphertext(out, ct.scale, level)


def ckks_rescale(ctx: Context, ct: CkksCiphertext) -> CkksCiphertext:
    """Divide by the last chain prime with rounding and drop a level."""
    level = ct.level
    if level < 2:
        raise LevelMismatch("rescale at level 1: level exhausted")
    n = ctx.n
    q_last = ctx.q_values[level - 1]
    new_level = level - 1
    q_col = ctx.chain_consts.q[:new_level].reshape(-1, 1)
    last_inv = ctx.last_inv[level].reshape(-1, 1)
    last_inv_sh = shoup_precompute(last_inv, q_col)
    out = cdata_new(ctx.pool, ct.data.size_poly, new_level, n, Domain.EVALUATION)
    midx = np.arange(level)
    new_midx = np.arange(new_level)
    half = q_last // 2
    q_last_mod = np.array(
        [q_last % q for q in ctx.q_values[:new_level]], dtype=_U64
    ).reshape(-1, 1)
    for p in range(ct.data.size_poly):
        coeff = ctx.ntt_chain.inverse(ct.data.view()[p], midx)
        last = coeff[level - 1]
        # centered residue of the last row against each remaining prime
        r = last[None, :] % q_col
        r = np.where(last[None, :] > half, sub_arr(r, q_last_mod, q_col), r)
        diff = sub_arr(coeff[:new_level], r, q_col)
        scaled = shoup_mul_arr(diff, np.broadcast_to(last_inv, diff.shape),
                               np.broadcast_to(last_inv_sh, diff.shape), q_col)
        out.view()[p] = ctx.ntt_chain.forward(scaled, new_midx)
    return CkksCiphertext(out, ct.scale / q_last, new_level)


def _apply_galois(ctx: Context, ct: CkksCiphertext, elt: int,
                  gks) -> CkksCiphertext:
    if ct.data.size_poly != 2:
        raise ParameterError("rotate/conjugate expect a 2-component ciphertext")
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
    return CkksCiphertext(out, ct.scale, level)


def ckks_rotate(ctx: Context, ct: CkksCiphertext, step: int, gks) -> CkksCiphertext:
    """Cyclic left rotation of the slot vector by ``step``."""
    return _apply_galois(ctx, ct, ctx.galois_elt_for_step(step), gks)


def ckks_conjugate(ctx: Context, ct: CkksCiphertext, gks) -> CkksCiphertext:
    return _apply_galois(ctx, ct, ctx.conj_elt, gks)

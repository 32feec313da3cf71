"""Key material: secret, public, relinearization, and Galois keys, plus the
key-switch primitive they all share.

The key-switch gadget is the classic per-RNS-prime decomposition.  Digit i
of the gadget is g_i = (Q/q_i) * [(Q/q_i)^{-1}]_{q_i}, which is congruent to
1 mod q_i and 0 mod every other prime, so truncating a key to the first
``level`` residues leaves a valid key for that level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .context import Context
from .coremath.modmath import ParameterError
from .coremath.sampling import SEED_BYTES, Rng, fresh_seed, signed_to_residues
from .coremath.vecmod import add_arr, neg_arr, sub_arr
from .rnspoly import CData, Domain, cdata_new, chain_constants

try:
    from .coremath import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

_U64 = np.uint64


@dataclass
class SecretKey:
    coeffs: np.ndarray          # signed ternary, length n
    s: CData                    # 1 poly, full chain, evaluation domain
    seed: bytes


@dataclass
class PublicKey:
    data: CData                 # [b, a], evaluation domain
    a_seed: bytes | None = None


@dataclass
class KSwitchKey:
    """One key-switch key: L digit pairs, each a [b, a] CData."""

    digits: list[CData]
    target_elt: int | None = None  # Galois element, None for relinearization


@dataclass
class GaloisKeys:
    keys: dict[int, KSwitchKey] = field(default_factory=dict)  # elt -> key

    def for_elt(self, elt: int) -> KSwitchKey:
        try:
            return self.keys[elt]
        except KeyError:
            raise ParameterError(f"no galois key for element {elt}") from None


def _ntt_signed(ctx: Context, coeffs: np.ndarray, level: int | None = None) -> np.ndarray:
    """Signed small polynomial -> evaluation-domain residue rows."""
    level = level or ctx.params.level_count
    rows = signed_to_residues(coeffs, ctx.q_arr(level))
    return ctx.ntt_chain.forward(rows, np.arange(level))


def keygen(ctx: Context, rng: Rng | None = None) -> SecretKey:
    rng = rng or Rng(fresh_seed())
    coeffs = rng.ternary(ctx.n)
    s = cdata_new(ctx.pool, 1, ctx.params.level_count, ctx.n, Domain.EVALUATION)
    s.view()[0] = _ntt_signed(ctx, coeffs)
    return SecretKey(coeffs=coeffs, s=s, seed=rng.seed)


def _rlwe_pair(ctx: Context, sk: SecretKey, rng: Rng, extra: np.ndarray | None = None,
               a_rows: np.ndarray | None = None) -> CData:
    """Fresh RLWE sample (b, a) with b = -(a*s) + e (+ extra), eval domain.
    All rows span the full chain."""
    L, n = ctx.params.level_count, ctx.n
    cc = ctx.chain_consts
    if a_rows is None:
        a_rows = ctx.ntt_chain.forward(
            rng.uniform_residues(ctx.q_arr(), n), np.arange(L)
        )
    e = rng.cbd_error(n)
    from .context import Scheme

    if ctx.params.scheme is Scheme.BGV:
        # BGV keeps noise in the t * e coset so it vanishes mod t.
        e = e * ctx.plain_modulus.value
    e_rows = _ntt_signed(ctx, e)
    s_rows = sk.s.view()[0]
    out = cdata_new(ctx.pool, 2, L, n, Domain.EVALUATION)
    v = out.view()
    midx = np.arange(L, dtype=np.int64)
    prod = np.empty_like(a_rows)
    if _kernels is not None:
        _kernels.mul_batch(a_rows, s_rows, prod, cc.q, cc.qinv, cc.r2, midx)
    else:
        from .coremath.vecmod import mul_arr

        q = cc.q[:L].reshape(-1, 1)
        prod = mul_arr(a_rows, s_rows, q, cc.qinv[:L].reshape(-1, 1),
                       cc.r2[:L].reshape(-1, 1))
    q_col = cc.q[:L].reshape(-1, 1)
    b = add_arr(neg_arr(prod, q_col), e_rows, q_col)
    if extra is not None:
        b = add_arr(b, extra, q_col)
    v[0] = b
    v[1] = a_rows
    return out


def pk_gen(ctx: Context, sk: SecretKey, rng: Rng | None = None) -> PublicKey:
    rng = rng or Rng(fresh_seed())
    # the seed for `a` comes from the caller's rng so a seeded rng yields a
    # fully reproducible key pair
    a_seed = rng.uniform_bytes(SEED_BYTES)
    a_rows = ctx.ntt_chain.forward(
        Rng(a_seed).uniform_residues(ctx.q_arr(), ctx.n),
        np.arange(ctx.params.level_count),
    )
    return PublicKey(data=_rlwe_pair(ctx, sk, rng, a_rows=a_rows), a_seed=a_seed)


def _gadget_rows(ctx: Context, payload_rows: np.ndarray, digit: int) -> np.ndarray:
    """payload * g_digit per residue: payload on row ``digit``, zero elsewhere."""
    out = np.zeros_like(payload_rows)
    out[digit] = payload_rows[digit]
    return out


def _ksk_for_payload(ctx: Context, sk: SecretKey, payload_rows: np.ndarray,
                     rng: Rng, target_elt: int | None = None) -> KSwitchKey:
    digits = []
    for i in range(ctx.params.level_count):
        extra = _gadget_rows(ctx, payload_rows, i)
        digits.append(_rlwe_pair(ctx, sk, rng, extra=extra))
    return KSwitchKey(digits=digits, target_elt=target_elt)


def relin_keygen(ctx: Context, sk: SecretKey, rng: Rng | None = None) -> KSwitchKey:
    """Key switching s^2 -> s."""
    rng = rng or Rng(fresh_seed())
    cc = ctx.chain_consts
    L = ctx.params.level_count
    s_rows = sk.s.view()[0]
    s2 = np.empty_like(s_rows)
    midx = np.arange(L, dtype=np.int64)
    if _kernels is not None:
        _kernels.mul_batch(s_rows, s_rows, s2, cc.q, cc.qinv, cc.r2, midx)
    else:
        from .coremath.vecmod import mul_arr

        q = cc.q[:L].reshape(-1, 1)
        s2 = mul_arr(s_rows, s_rows, q, cc.qinv[:L].reshape(-1, 1),
                     cc.r2[:L].reshape(-1, 1))
    return _ksk_for_payload(ctx, sk, s2, rng)


def galois_keygen(ctx: Context, sk: SecretKey, steps, rng: Rng | None = None,
                  include_conj: bool = False) -> GaloisKeys:
    """Keys switching sigma_g(s) -> s for each rotation step (and optionally
    the conjugation element)."""
    rng = rng or Rng(fresh_seed())
    elts = [ctx.galois_elt_for_step(k) for k in steps]
    if include_conj:
        elts.append(ctx.conj_elt)
    out = GaloisKeys()
    s_rows = sk.s.view()[0]
    for elt in elts:
        if elt in out.keys:
            continue
        perm = ctx.galois_perm(elt)
        sg = s_rows[:, perm]
        out.keys[elt] = _ksk_for_payload(ctx, sk, sg, rng, target_elt=elt)
    return out


class LevelMismatch(ParameterError):
    pass


def key_switch(ctx: Context, rows: np.ndarray, ksk: KSwitchKey):
    """Apply a key-switch key to an evaluation-domain polynomial.

    rows: (level, n) residue matrix of the polynomial multiplying the key's
    source secret factor.  Returns (b_rows, a_rows), each (level, n), in the
    evaluation domain; adding them to a ciphertext's (c0, c1) completes the
    re-keying.
    """
    level, n = rows.shape
    if level > len(ksk.digits) or level > ctx.params.level_count:
        raise LevelMismatch(f"polynomial level {level} exceeds key level")
    cc = ctx.chain_consts
    midx = np.arange(level, dtype=np.int64)
    # Decompose in the coefficient domain: digit i is the plain residue
    # polynomial mod q_i, re-reduced against every prime of the level.
    coeff = ctx.ntt_chain.inverse(rows, midx)
    q_col = cc.q[:level].reshape(-1, 1)
    # digit_rows[i, j] = coeff[i] mod q_j
    digit_rows = np.empty((level, level, n), dtype=_U64)
    for i in range(level):
        digit_rows[i] = coeff[i][None, :] % q_col
    flat = digit_rows.reshape(level * level, n)
    flat_idx = np.tile(midx, level)
    flat = ctx.ntt_chain.forward(flat, flat_idx)
    digit_rows = flat.reshape(level, level, n)

    b_acc = np.zeros((level, n), dtype=_U64)
    a_acc = np.zeros((level, n), dtype=_U64)
    prod = np.empty((level, n), dtype=_U64)
    for i in range(level):
        kv = ksk.digits[i].view()
        if _kernels is not None:
            _kernels.mul_batch(digit_rows[i], kv[0, :level], prod,
                               cc.q, cc.qinv, cc.r2, midx)
        else:
            from .coremath.vecmod import mul_arr

            prod = mul_arr(digit_rows[i], kv[0, :level], q_col,
                           cc.qinv[:level].reshape(-1, 1),
                           cc.r2[:level].reshape(-1, 1))
        b_acc = add_arr(b_acc, prod, q_col)
        if _kernels is not None:
            _kernels.mul_batch(digit_rows[i], kv[1, :level], prod,
                               cc.q, cc.qinv, cc.r2, midx)
        else:
            from .coremath.vecmod import mul_arr

            prod = mul_arr(digit_rows[i], kv[1, :level], q_col,
                           cc.qinv[:level].reshape(-1, 1),
                           cc.r2[:level].reshape(-1, 1))
        a_acc = add_arr(a_acc, prod, q_col)
    return b_acc, a_acc

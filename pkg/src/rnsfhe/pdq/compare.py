"""Digit-wise comparison circuits over root-of-unity encodings.

A digit d in base p is carried as the slot value omega^d with omega the
primitive p-th root of unity, so equality and less-than become fixed
polynomial evaluations over the p x p grid of root pairs:

    EQ(z, w)  = (1/p) * (1 + sum_{t=1}^{p-1} z^t w^{p-t})
    LT(z, w)  = sum_{t,s} c_{t,s} z^t w^s,
    c_{t,s}   = (1/p^2) * sum_{a < b} omega^{-a t - b s}

Both identities are checked exhaustively against the p x p truth table in
the test suite before anything homomorphic relies on them.

Digit circuits compose into full-word comparisons through the standard
most-significant-digit scan: a < b iff some digit j has a_j < b_j and all
higher digits agree.  The per-digit equality factors are kept unscaled
(values in {0, p}) through the product trees and the 1/p^k normalizations
are folded into scalar coefficients at the end, which saves one
multiplicative level on every mask.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..coremath.modmath import ParameterError
from .evaluator import CkksEval

COEFF_EPS = 1e-12

COMPARE_OPS = ("<", "<=", "==", "!=")


@lru_cache(maxsize=None)
def lt_coeffs(p: int) -> np.ndarray:
    """Interpolated less-than coefficients c[t, s] on the root-of-unity grid."""
    w = np.exp(2j * np.pi / p)
    c = np.zeros((p, p), dtype=np.complex128)
    for t in range(p):
        for s in range(p):
            c[t, s] = sum(
                w ** (-(a * t + b * s)) for a in range(p) for b in range(p) if a < b
            ) / p ** 2
    return c


def power_basis(ev: CkksEval, ct, p: int) -> dict:
    """Powers 1..p-1 of a root-of-unity ciphertext (squaring where possible)."""
    pows = {1: ct}
    for e in range(2, p):
        if e % 2 == 0:
            pows[e] = ev.square(pows[e // 2])
        else:
            pows[e] = ev.mul(pows[e - 1], ct)
    return pows


def eq_digit_raw(ev: CkksEval, pz: dict, pw: dict, p: int):
    """Unscaled equality factor: p on equal digits, 0 otherwise."""
    terms = [ev.mul(pz[t], pw[p - t]) for t in range(1, p)]
    return ev.add_const(ev.add_many(terms), 1.0)


def lt_digit_scaled(ev: CkksEval, pz: dict, pw: dict, p: int, factor: float):
    """LT indicator times ``factor`` (used to fold the eq normalization)."""
    c = lt_coeffs(p) * factor
    terms = []
    const_total = 0.0 + 0.0j
    for t in range(p):
        inner_terms = [
            ev.mul_scalar(pw[s], c[t, s])
            for s in range(1, p)
            if abs(c[t, s]) > COEFF_EPS
        ]
        c_t0 = c[t, 0]
        if t == 0:
            if inner_terms:
                terms.append(ev.add_many(inner_terms))
            const_total += c_t0
            continue
        if inner_terms:
            inner = ev.add_many(inner_terms)
            if abs(c_t0) > COEFF_EPS:
                inner = ev.add_const(inner, c_t0)
            terms.append(ev.mul(pz[t], inner))
        elif abs(c_t0) > COEFF_EPS:
            terms.append(ev.mul_scalar(pz[t], c_t0))
    out = ev.add_many(terms)
    if abs(const_total) > COEFF_EPS:
        out = ev.add_const(out, const_total)
    return out


def product_tree(ev: CkksEval, cts: list):
    if len(cts) == 1:
        return cts[0]
    mid = len(cts) // 2
    return ev.mul(product_tree(ev, cts[:mid]), product_tree(ev, cts[mid:]))


def suffix_products(ev: CkksEval, cts: list) -> list:
    """S[j] = product of cts[j+1:], None for the empty product.

    Divide-and-conquer keeps the multiplicative depth logarithmic in the
    digit count (a plain right-to-left scan would burn one level per digit).
    """
    k = len(cts)
    out: list = [None] * k

    def combine(tails: list):
        # deepest-first association keeps the result at (min level - 1)
        # instead of chaining levels away
        acc, *rest = sorted(tails, key=lambda c: -c.level)
        for t in rest:
            acc = ev.mul(acc, t)
        return acc

    def fill(lo: int, hi: int, tails: list):
        if hi - lo == 1:
            out[lo] = combine(tails) if tails else None
            return
        mid = (lo + hi) // 2
        fill(mid, hi, tails)
        fill(lo, mid, tails + [product_tree(ev, cts[mid:hi])])

    fill(0, k, [])
    return out


def compare_digit_columns(ev: CkksEval, digits_a: list, digits_b: list,
                          p: int, op: str):
    """Comparison mask between two digit-encoded columns.

    digits_a/digits_b: little-endian lists of omega^digit ciphertexts.
    Returns one ciphertext with slot values approx 1 on rows satisfying
    ``a op b`` and approx 0 elsewhere.
    """
    if op not in COMPARE_OPS:
        raise ParameterError(f"unsupported comparison {op!r}")
    k = len(digits_a)
    if len(digits_b) != k:
        raise ParameterError("digit-count mismatch between compare operands")
    need_lt = op in ("<", "<=")
    eq_raw, lts = [], []
    for j in range(k):
        pz = power_basis(ev, digits_a[j], p)
        pw = power_basis(ev, digits_b[j], p)
        eq_raw.append(eq_digit_raw(ev, pz, pw, p))
        if need_lt:
            # fold the 1/p^(k-1-j) normalization of the higher-digit
            # equality product into the LT coefficients
            lts.append(lt_digit_scaled(ev, pz, pw, p, p ** -(k - 1 - j)))

    eq_total = None
    if op in ("<=", "==", "!="):
        eq_total = ev.mul_scalar(product_tree(ev, eq_raw), float(p) ** -k)
    if op == "==":
        return eq_total
    if op == "!=":
        return ev.one_minus(eq_total)

    suffixes = suffix_products(ev, eq_raw)
    terms = [
        lts[j] if suffixes[j] is None else ev.mul(lts[j], suffixes[j])
        for j in range(k)
    ]
    lt_total = ev.add_many(terms)
    if op == "<":
        return lt_total
    return ev.add(lt_total, eq_total)

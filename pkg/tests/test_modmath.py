"""Scalar and vectorized modular arithmetic against python-int ground truth."""

import numpy as np
import pytest

from rnsfhe.coremath.modmath import (
    Modulus,
    ParameterError,
    add_mod,
    inv_mod,
    is_prime,
    mul_mod,
    neg_mod,
    pow_mod,
    sub_mod,
)
from rnsfhe.coremath.primes import gen_ntt_prime_chain, min_primitive_root
from rnsfhe.coremath.vecmod import (
    add_arr,
    mul_arr,
    neg_arr,
    ops_for,
    shoup_mul_arr,
    shoup_precompute,
    sub_arr,
)

Q = Modulus(gen_ntt_prime_chain(45, 4096, 1)[0].value)


def test_modulus_rejects_bad_values():
    with pytest.raises(ParameterError):
        Modulus(1)
    with pytest.raises(ParameterError):
        Modulus(1 << 62)
    with pytest.raises(ParameterError):
        Modulus(Q.value * 3)  # composite


def test_scalar_ops_match_python_ints(np_rng):
    q = Q.value
    xs = np_rng.integers(0, q, 500, dtype=np.uint64)
    ys = np_rng.integers(0, q, 500, dtype=np.uint64)
    for x, y in zip(xs.tolist(), ys.tolist()):
        assert mul_mod(x, y, Q) == x * y % q
        assert add_mod(x, y, Q) == (x + y) % q
        assert sub_mod(x, y, Q) == (x - y) % q
        assert neg_mod(x, Q) == (-x) % q
    assert pow_mod(3, 10 ** 12 + 7, Q) == pow(3, 10 ** 12 + 7, q)
    for x in xs[:50].tolist():
        if x == 0:
            continue
        assert inv_mod(x, Q) * x % q == 1


def test_inv_of_zero_fails():
    with pytest.raises((ParameterError, ValueError, ZeroDivisionError)):
        inv_mod(0, Q)


def test_is_prime_knowns():
    assert is_prime(2) and is_prime(65537) and is_prime(Q.value)
    assert not is_prime(1) and not is_prime(65536) and not is_prime(Q.value * 3)


def test_vector_ops_match_scalar(np_rng):
    q = np.uint64(Q.value)
    x = np_rng.integers(0, Q.value, 2048, dtype=np.uint64)
    y = np_rng.integers(0, Q.value, 2048, dtype=np.uint64)
    want_mul = [a * b % Q.value for a, b in zip(x.tolist(), y.tolist())]
    ops = ops_for(Q)
    got = ops.from_mont(ops.mont_mul(ops.to_mont(x), ops.to_mont(y)))
    assert got.tolist() == want_mul
    assert add_arr(x, y, q).tolist() == [(a + b) % Q.value
                                         for a, b in zip(x.tolist(), y.tolist())]
    assert sub_arr(x, y, q).tolist() == [(a - b) % Q.value
                                         for a, b in zip(x.tolist(), y.tolist())]
    assert neg_arr(x, q).tolist() == [(-a) % Q.value for a in x.tolist()]


def test_shoup_multiplication(np_rng):
    q = np.uint64(Q.value)
    x = np_rng.integers(0, Q.value, 1024, dtype=np.uint64)
    w = np_rng.integers(0, Q.value, 1024, dtype=np.uint64)
    w_sh = shoup_precompute(w, Q.value)
    got = shoup_mul_arr(x, w, w_sh, q)
    want = [a * b % Q.value for a, b in zip(x.tolist(), w.tolist())]
    assert got.tolist() == want


def test_mul_arr_montgomery_form(np_rng):
    from rnsfhe.rnspoly import chain_constants

    qs = [m.value for m in gen_ntt_prime_chain(40, 64, 3)]
    cc = chain_constants(qs)
    x = np_rng.integers(0, min(qs), (3, 64), dtype=np.uint64)
    y = np_rng.integers(0, min(qs), (3, 64), dtype=np.uint64)
    got = mul_arr(x, y, cc.q[:3].reshape(-1, 1), cc.qinv[:3].reshape(-1, 1),
                  cc.r2[:3].reshape(-1, 1))
    for j, q in enumerate(qs):
        want = [a * b % q for a, b in zip(x[j].tolist(), y[j].tolist())]
        assert got[j].tolist() == want


def test_primitive_roots():
    root = min_primitive_root(Q, 8192)
    assert pow(root, 8192, Q.value) == 1
    assert pow(root, 4096, Q.value) != 1

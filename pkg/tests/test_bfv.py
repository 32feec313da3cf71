"""BFV exact arithmetic, batching, and the BEHZ multiplication pipeline
checked against a textbook multiprecision oracle."""

import numpy as np
import pytest

from rnsfhe.context import Context, Scheme
from rnsfhe.coremath.crt import crt_reconstruct_poly
from rnsfhe.keys import galois_keygen, keygen, pk_gen, relin_keygen
from rnsfhe.rnspoly import cdata_new
from rnsfhe.schemes.batching import (
    IntPlaintext,
    batch_decode,
    batch_encode,
    coeff_decode,
    coeff_encode,
)
from rnsfhe.schemes.bfv import (
    BfvCiphertext,
    bfv_add,
    bfv_decrypt,
    bfv_encrypt,
    bfv_encrypt_ints,
    bfv_multiply,
    bfv_multiply_plain,
    bfv_relinearize,
    bfv_rotate_columns,
    bfv_rotate_rows,
    bfv_square,
    bfv_sub,
    noise_budget,
)

from tests.conftest import seeded_rng, small_params

T = 65537
N = 64


@pytest.fixture(scope="module")
def ctx():
    return Context(small_params(Scheme.BFV, n=N, levels=2, bits=36))


@pytest.fixture(scope="module")
def keys(ctx):
    sk = keygen(ctx, seeded_rng(1))
    return {
        "sk": sk,
        "pk": pk_gen(ctx, sk, seeded_rng(2)),
        "rlk": relin_keygen(ctx, sk, seeded_rng(3)),
        "gks": galois_keygen(ctx, sk, [1, -2], seeded_rng(4), include_conj=True),
    }


def ints(np_rng, count=N):
    return np_rng.integers(0, T, count, dtype=np.uint64)


def test_batch_encode_decode(ctx, np_rng):
    v = ints(np_rng)
    assert batch_decode(ctx, batch_encode(ctx, v)).tolist() == v.tolist()


def test_coeff_encode_decode(ctx, np_rng):
    v = ints(np_rng)
    pt = coeff_encode(ctx, v)
    assert not pt.batched
    assert coeff_decode(ctx, pt).tolist() == v.tolist()


def test_encrypt_decrypt_exact(ctx, keys, np_rng):
    v = ints(np_rng)
    ct = bfv_encrypt_ints(ctx, v, keys["pk"], seeded_rng(10))
    got = batch_decode(ctx, bfv_decrypt(ctx, ct, keys["sk"]))
    assert got.tolist() == v.tolist()
    assert noise_budget(ctx, ct, keys["sk"]) > 10


def test_add_sub_exact(ctx, keys, np_rng):
    a, b = ints(np_rng), ints(np_rng)
    ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(11))
    cb = bfv_encrypt_ints(ctx, b, keys["pk"], seeded_rng(12))
    got = batch_decode(ctx, bfv_decrypt(ctx, bfv_add(ctx, ca, cb), keys["sk"]))
    assert got.tolist() == ((a + b) % T).tolist()
    got = batch_decode(ctx, bfv_decrypt(ctx, bfv_sub(ctx, ca, cb), keys["sk"]))
    assert got.tolist() == ((a.astype(np.int64) - b) % T).tolist()


def test_multiply_relinearize_exact(ctx, keys, np_rng):
    a, b = ints(np_rng), ints(np_rng)
    ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(13))
    cb = bfv_encrypt_ints(ctx, b, keys["pk"], seeded_rng(14))
    prod = bfv_multiply(ctx, ca, cb)
    assert prod.data.size_poly == 3
    want = (a.astype(object) * b % T)
    got = batch_decode(ctx, bfv_decrypt(ctx, prod, keys["sk"]))
    assert got.tolist() == want.tolist()
    lin = bfv_relinearize(ctx, prod, keys["rlk"])
    got = batch_decode(ctx, bfv_decrypt(ctx, lin, keys["sk"]))
    assert got.tolist() == want.tolist()
    # the relinearized budget drops but must remain positive
    assert noise_budget(ctx, lin, keys["sk"]) > 0


def test_square(ctx, keys, np_rng):
    a = ints(np_rng)
    ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(15))
    got = batch_decode(ctx, bfv_decrypt(ctx, bfv_square(ctx, ca), keys["sk"]))
    assert got.tolist() == (a.astype(object) * a % T).tolist()


def test_multiply_plain(ctx, keys, np_rng):
    a, b = ints(np_rng), ints(np_rng)
    ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(16))
    got = batch_decode(ctx, bfv_decrypt(
        ctx, bfv_multiply_plain(ctx, ca, batch_encode(ctx, b)), keys["sk"]))
    assert got.tolist() == (a.astype(object) * b % T).tolist()


def test_rotations(ctx, keys, np_rng):
    half = N // 2
    a = ints(np_rng)
    ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(17))
    top, bot = a[:half], a[half:]
    for step in (1, -2):
        rot = bfv_rotate_rows(ctx, ca, step, keys["gks"])
        got = batch_decode(ctx, bfv_decrypt(ctx, rot, keys["sk"]))
        want = np.concatenate([np.roll(top, -step), np.roll(bot, -step)])
        assert got.tolist() == want.tolist()
    swapped = bfv_rotate_columns(ctx, ca, keys["gks"])
    got = batch_decode(ctx, bfv_decrypt(ctx, swapped, keys["sk"]))
    assert got.tolist() == np.concatenate([bot, top]).tolist()


# -- BEHZ vs textbook multiprecision oracle ----------------------------------


def textbook_tensor(ctx, ca: BfvCiphertext, cb: BfvCiphertext) -> BfvCiphertext:
    """Reference BFV tensor: CRT-lift both ciphertexts to centered big-int
    polynomials, take the exact negacyclic tensor over the integers, scale by
    t/Q with exact rounding, and reduce back to RNS residues."""
    level, n = ca.level, ctx.n
    base = ctx.bases[level]
    q = base.product
    t = ctx.plain_modulus.value

    def lift(ct):
        polys = []
        for p in range(ct.data.size_poly):
            coeffs = crt_reconstruct_poly(ct.data.view()[p], base)
            polys.append([c - q if c > q // 2 else c for c in coeffs])
        return polys

    def nega_mul(x, y):
        out = [0] * n
        for i, xi in enumerate(x):
            if xi == 0:
                continue
            for j, yj in enumerate(y):
                k = i + j
                if k < n:
                    out[k] += xi * yj
                else:
                    out[k - n] -= xi * yj
        return out

    a0, a1 = lift(ca)
    b0, b1 = lift(cb)
    tensor = [
        nega_mul(a0, b0),
        [u + v for u, v in zip(nega_mul(a0, b1), nega_mul(a1, b0))],
        nega_mul(a1, b1),
    ]
    out = cdata_new(ctx.pool, 3, level, n)
    for k, poly in enumerate(tensor):
        scaled = [(2 * t * x + q) // (2 * q) % q for x in poly]
        for j, qj in enumerate(ctx.q_values[:level]):
            out.view()[k, j] = np.array([x % qj for x in scaled], dtype=np.uint64)
    return BfvCiphertext(out, level)


def test_behz_matches_textbook_oracle(ctx, keys, np_rng):
    for trial in range(5):
        a, b = ints(np_rng), ints(np_rng)
        ca = bfv_encrypt_ints(ctx, a, keys["pk"], seeded_rng(100 + trial))
        cb = bfv_encrypt_ints(ctx, b, keys["pk"], seeded_rng(200 + trial))
        fast = bfv_multiply(ctx, ca, cb)
        slow = textbook_tensor(ctx, ca, cb)
        want = (a.astype(object) * b % T).tolist()
        got_fast = batch_decode(ctx, bfv_decrypt(ctx, fast, keys["sk"]))
        got_slow = batch_decode(ctx, bfv_decrypt(ctx, slow, keys["sk"]))
        assert got_slow.tolist() == want
        assert got_fast.tolist() == got_slow.tolist()

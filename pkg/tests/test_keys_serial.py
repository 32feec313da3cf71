"""Key generation determinism, key switching, and serialization round-trips."""

import numpy as np
import pytest

from rnsfhe.context import Context, Scheme
from rnsfhe.coremath.sampling import Rng
from rnsfhe.keys import (
    LevelMismatch,
    galois_keygen,
    key_switch,
    keygen,
    pk_gen,
    relin_keygen,
)
from rnsfhe.serial import (
    KIND_CIPHERTEXT,
    KIND_GALOIS,
    SerializationError,
    deserialize_block,
    deserialize_galois_keys,
    deserialize_kswitch_key,
    deserialize_params,
    deserialize_public_key,
    deserialize_secret_key,
    parse_record,
    serialize_block,
    serialize_galois_keys,
    serialize_kswitch_key,
    serialize_params,
    serialize_public_key,
    serialize_secret_key,
)

from tests.conftest import seeded_rng, small_params


@pytest.fixture(scope="module")
def ctx():
    return Context(small_params(Scheme.BFV, n=64, levels=3))


def test_keygen_deterministic(ctx):
    sk1 = keygen(ctx, seeded_rng(5))
    sk2 = keygen(ctx, seeded_rng(5))
    sk3 = keygen(ctx, seeded_rng(6))
    assert sk1.coeffs.tolist() == sk2.coeffs.tolist()
    assert (sk1.s.view() == sk2.s.view()).all()
    assert sk1.coeffs.tolist() != sk3.coeffs.tolist()
    assert set(sk1.coeffs.tolist()) <= {-1, 0, 1}


def test_pk_gen_deterministic(ctx):
    sk = keygen(ctx, seeded_rng(5))
    pk1 = pk_gen(ctx, sk, seeded_rng(7))
    pk2 = pk_gen(ctx, sk, seeded_rng(7))
    assert pk1.a_seed == pk2.a_seed
    assert (pk1.data.view() == pk2.data.view()).all()


def test_pk_is_rlwe_sample(ctx):
    # b + a*s must decode to small noise
    from rnsfhe.coremath.crt import crt_reconstruct_centered

    sk = keygen(ctx, seeded_rng(5))
    pk = pk_gen(ctx, sk, seeded_rng(7))
    v = pk.data.view()
    L = ctx.params.level_count
    midx = np.arange(L)
    cc = ctx.chain_consts
    from rnsfhe.coremath.vecmod import add_arr, mul_arr

    q_col = cc.q[:L].reshape(-1, 1)
    prod = mul_arr(v[1], sk.s.view()[0], q_col, cc.qinv[:L].reshape(-1, 1),
                   cc.r2[:L].reshape(-1, 1))
    noise_eval = add_arr(v[0], prod, q_col)
    noise = ctx.ntt_chain.inverse(noise_eval, midx)
    for i in range(ctx.n):
        e = crt_reconstruct_centered(noise[:, i], ctx.base)
        assert abs(e) <= 40  # centered binomial with sigma ~3.16


def test_key_switch_rekeys_to_relin_target(ctx):
    """key_switch applied to a polynomial d must satisfy
    b + a*s ~= d * s^2 (mod Q) up to small noise times the digit count."""
    from rnsfhe.coremath.crt import crt_reconstruct_centered
    from rnsfhe.coremath.vecmod import add_arr, mul_arr, sub_arr

    sk = keygen(ctx, seeded_rng(5))
    rk = relin_keygen(ctx, sk, seeded_rng(9))
    L, n = ctx.params.level_count, ctx.n
    cc = ctx.chain_consts
    q_col = cc.q[:L].reshape(-1, 1)
    rng = seeded_rng(11)
    d = ctx.ntt_chain.forward(rng.uniform_residues(ctx.q_arr(), n), np.arange(L))
    b, a = key_switch(ctx, d, rk)
    s = sk.s.view()[0]
    qinv = cc.qinv[:L].reshape(-1, 1)
    r2 = cc.r2[:L].reshape(-1, 1)
    s2 = mul_arr(s, s, q_col, qinv, r2)
    lhs = add_arr(b, mul_arr(a, s, q_col, qinv, r2), q_col)
    rhs = mul_arr(d, s2, q_col, qinv, r2)
    diff = ctx.ntt_chain.inverse(sub_arr(lhs, rhs, q_col), np.arange(L))
    # noise bound: L digits, each a ring product of a residue-sized digit
    # polynomial (coefficients < q_max) with small key noise
    bound = L * n * max(ctx.q_values) * 40
    for i in range(n):
        e = crt_reconstruct_centered(diff[:, i], ctx.base)
        assert abs(e) < bound


def test_key_switch_level_check(ctx):
    sk = keygen(ctx, seeded_rng(5))
    rk = relin_keygen(ctx, sk, seeded_rng(9))
    too_deep = np.zeros((ctx.params.level_count + 1, ctx.n), dtype=np.uint64)
    with pytest.raises(LevelMismatch):
        key_switch(ctx, too_deep, rk)


def test_galois_keys_cover_requested_steps(ctx):
    sk = keygen(ctx, seeded_rng(5))
    gk = galois_keygen(ctx, sk, [1, 2, -1], seeded_rng(9), include_conj=True)
    elts = {ctx.galois_elt_for_step(s) for s in (1, 2, -1)} | {ctx.conj_elt}
    assert set(gk.keys) == elts
    for elt, ksk in gk.keys.items():
        assert ksk.target_elt == elt
        assert len(ksk.digits) == ctx.params.level_count


# -- serialization -----------------------------------------------------------


def test_params_roundtrip(ctx):
    data = serialize_params(ctx.params)
    back = deserialize_params(data)
    assert back == ctx.params


def test_secret_key_roundtrip(ctx):
    sk = keygen(ctx, seeded_rng(5))
    back = deserialize_secret_key(ctx, serialize_secret_key(ctx.params, sk))
    assert back.coeffs.tolist() == sk.coeffs.tolist()
    assert (back.s.view() == sk.s.view()).all()


@pytest.mark.parametrize("seeded", [False, True])
def test_public_key_roundtrip(ctx, seeded):
    sk = keygen(ctx, seeded_rng(5))
    pk = pk_gen(ctx, sk, seeded_rng(7))
    data = serialize_public_key(ctx.params, pk, seeded=seeded)
    back = deserialize_public_key(ctx, data)
    assert (back.data.view() == pk.data.view()).all()
    if seeded:
        # seed compression halves the polynomial payload
        full = serialize_public_key(ctx.params, pk, seeded=False)
        assert len(data) < len(full) * 0.6


def test_kswitch_roundtrip(ctx):
    sk = keygen(ctx, seeded_rng(5))
    rk = relin_keygen(ctx, sk, seeded_rng(9))
    back = deserialize_kswitch_key(ctx, serialize_kswitch_key(ctx.params, rk))
    assert len(back.digits) == len(rk.digits)
    for a, b in zip(rk.digits, back.digits):
        assert (a.view() == b.view()).all()


def test_galois_keys_roundtrip(ctx):
    sk = keygen(ctx, seeded_rng(5))
    gk = galois_keygen(ctx, sk, [1, -1], seeded_rng(9))
    back = deserialize_galois_keys(ctx, serialize_galois_keys(ctx.params, gk))
    assert set(back.keys) == set(gk.keys)
    for elt in gk.keys:
        for a, b in zip(gk.keys[elt].digits, back.keys[elt].digits):
            assert (a.view() == b.view()).all()


def test_block_roundtrip(ctx, np_rng):
    from rnsfhe.rnspoly import Domain, cdata_new

    cd = cdata_new(None, 2, 3, ctx.n, Domain.EVALUATION)
    for j, q in enumerate(ctx.q_values):
        cd.view()[:, j] = np_rng.integers(0, q, (2, ctx.n), dtype=np.uint64)
    data = serialize_block(ctx.params, KIND_CIPHERTEXT, cd, scale=2.0 ** 30, aux=3)
    back, rec = deserialize_block(ctx.params, data, KIND_CIPHERTEXT)
    assert (back.view() == cd.view()).all()
    assert back.domains == cd.domains
    assert rec.scale == 2.0 ** 30 and rec.aux == 3


def test_malformed_records_rejected(ctx):
    sk = keygen(ctx, seeded_rng(5))
    data = serialize_secret_key(ctx.params, sk)
    with pytest.raises(SerializationError):
        parse_record(b"XXXX" + data[4:])  # bad magic
    with pytest.raises(SerializationError):
        parse_record(data[:-10])  # truncated
    flipped = bytearray(data)
    flipped[len(flipped) // 2] ^= 0xFF
    with pytest.raises(SerializationError):
        parse_record(bytes(flipped))  # checksum mismatch
    with pytest.raises(SerializationError):
        parse_record(data, expected_kind=KIND_GALOIS)  # wrong kind


def test_params_mismatch_rejected(ctx):
    other = Context(small_params(Scheme.BFV, n=32, levels=2))
    sk = keygen(other, seeded_rng(5))
    data = serialize_secret_key(other.params, sk)
    with pytest.raises(SerializationError):
        deserialize_secret_key(ctx, data)

"""CData layout/lifecycle and element-wise RNS polynomial operations."""

import numpy as np
import pytest

from rnsfhe.coremath.ntt import NttChain, NttTables
from rnsfhe.coremath.primes import gen_ntt_prime_chain
from rnsfhe.pools import MemoryPool, WorkerPool
from rnsfhe.rnspoly import (
    CData,
    Domain,
    DomainMismatch,
    LevelExhausted,
    ShapeMismatch,
    cdata_new,
    drop_last_modulus,
    fused_mul_add,
    fused_neg_multiply,
    poly_add,
    poly_mul_pointwise,
    poly_negacyclic_mul,
    poly_negate,
    poly_sub,
    poly_to_coeff,
    poly_to_eval,
)

from tests.test_ntt import schoolbook_negacyclic

N = 64
MODULI = gen_ntt_prime_chain(36, N, 3)
Q_VALUES = [m.value for m in MODULI]
CHAIN = NttChain([NttTables(N, m) for m in MODULI])


def rand_cdata(np_rng, pool=None, size_poly=2, size_modulus=3,
               domain=Domain.COEFFICIENT):
    cd = CData(pool, size_poly, size_modulus, N, domain)
    v = cd.view()
    for j in range(size_modulus):
        v[:, j] = np_rng.integers(0, Q_VALUES[j], (size_poly, N), dtype=np.uint64)
    return cd


def test_layout_and_views(np_rng):
    cd = rand_cdata(np_rng)
    assert cd.view().shape == (2, 3, N)
    assert cd.rows().shape == (6, N)
    assert cd.mod_idx().tolist() == [0, 1, 2, 0, 1, 2]
    # rows() aliases view() in flat layout order
    cd.view()[1, 2, 5] = 123
    assert cd.rows()[5, 5] == 123
    assert cd.poly(1)[2, 5] == 123
    assert cd.row(1, 2)[5] == 123


def test_pool_backed_alloc_zeroed():
    pool = MemoryPool(3, unit_mb=1, cap_mb=3)
    a = cdata_new(pool, 2, 3, N)
    a.view()[:] = 5
    a.free()
    b = cdata_new(pool, 2, 3, N)
    # the reused arena block must come back zeroed
    assert b.handle.offset == 0
    assert not b.view().any()


def test_del_returns_block():
    pool = MemoryPool(3, unit_mb=1, cap_mb=3)
    cd = cdata_new(pool, 1, 1, N)
    del cd
    stats = pool.pool_stats()
    assert stats["return_count"] == 1
    assert stats["live_bytes"] == 0


def test_resize_preserves_overlap(np_rng):
    cd = rand_cdata(np_rng, size_poly=2, size_modulus=3)
    snapshot = cd.view().copy()
    cd.resize(3, 2)
    assert cd.view().shape == (3, 2, N)
    assert (cd.view()[:2, :2] == snapshot[:2, :2]).all()
    assert not cd.view()[2].any()
    cd.resize(2, 3)
    assert (cd.view()[:2, :2] == snapshot[:2, :2]).all()
    assert not cd.view()[:, 2].any()


def test_drop_last_modulus(np_rng):
    cd = rand_cdata(np_rng)
    drop_last_modulus(cd)
    assert cd.size_modulus == 2
    solo = CData(None, 1, 1, N)
    with pytest.raises(LevelExhausted):
        drop_last_modulus(solo)


def test_add_sub_negate_match_numpy(np_rng):
    a = rand_cdata(np_rng)
    b = rand_cdata(np_rng)
    out = CData(None, 2, 3, N)
    poly_add(a, b, out, Q_VALUES)
    for j, q in enumerate(Q_VALUES):
        want = (a.view()[:, j].astype(object) + b.view()[:, j]) % q
        assert (out.view()[:, j] == want).all()
    poly_sub(a, b, out, Q_VALUES)
    for j, q in enumerate(Q_VALUES):
        want = (a.view()[:, j].astype(object) - b.view()[:, j]) % q
        assert (out.view()[:, j] == want).all()
    poly_negate(a, out, Q_VALUES)
    for j, q in enumerate(Q_VALUES):
        want = (-a.view()[:, j].astype(object)) % q
        assert (out.view()[:, j] == want).all()


def test_worker_add_matches_serial(np_rng):
    a = rand_cdata(np_rng)
    b = rand_cdata(np_rng)
    serial = CData(None, 2, 3, N)
    parallel = CData(None, 2, 3, N)
    poly_add(a, b, serial, Q_VALUES)
    with WorkerPool(3, 3) as wp:
        poly_add(a, b, parallel, Q_VALUES, worker=wp)
    assert (serial.view() == parallel.view()).all()


def test_pointwise_mul_matches_bigint(np_rng):
    a = rand_cdata(np_rng, domain=Domain.EVALUATION)
    b = rand_cdata(np_rng, domain=Domain.EVALUATION)
    out = CData(None, 2, 3, N, Domain.EVALUATION)
    poly_mul_pointwise(a, b, out, Q_VALUES)
    for j, q in enumerate(Q_VALUES):
        want = a.view()[:, j].astype(object) * b.view()[:, j] % q
        assert (out.view()[:, j] == want).all()


def test_fused_ops_bit_identical(np_rng):
    a = rand_cdata(np_rng, domain=Domain.EVALUATION)
    b = rand_cdata(np_rng, domain=Domain.EVALUATION)
    c = rand_cdata(np_rng, domain=Domain.EVALUATION)
    fused = CData(None, 2, 3, N, Domain.EVALUATION)
    composed = CData(None, 2, 3, N, Domain.EVALUATION)
    tmp = CData(None, 2, 3, N, Domain.EVALUATION)

    fused_neg_multiply(a, b, fused, Q_VALUES)
    poly_mul_pointwise(a, b, tmp, Q_VALUES)
    poly_negate(tmp, composed, Q_VALUES)
    assert (fused.view() == composed.view()).all()

    fused_mul_add(a, b, c, fused, Q_VALUES)
    poly_mul_pointwise(a, b, tmp, Q_VALUES)
    poly_add(tmp, c, composed, Q_VALUES)
    assert (fused.view() == composed.view()).all()


def test_domain_tracking_and_errors(np_rng):
    a = rand_cdata(np_rng)
    b = rand_cdata(np_rng)
    out = CData(None, 2, 3, N)
    with pytest.raises(DomainMismatch):
        poly_mul_pointwise(a, b, out, Q_VALUES)
    poly_to_eval(a, CHAIN)
    assert all(d is Domain.EVALUATION for d in a.domains)
    poly_to_coeff(a, CHAIN)
    assert all(d is Domain.COEFFICIENT for d in a.domains)
    small = CData(None, 1, 3, N)
    with pytest.raises(ShapeMismatch):
        poly_add(a, b, small, Q_VALUES)


def test_to_eval_roundtrip(np_rng):
    a = rand_cdata(np_rng)
    snapshot = a.view().copy()
    poly_to_eval(a, CHAIN)
    assert not (a.view() == snapshot).all()
    poly_to_coeff(a, CHAIN)
    assert (a.view() == snapshot).all()


def test_negacyclic_mul_matches_schoolbook(np_rng):
    a = rand_cdata(np_rng, size_poly=1)
    b = rand_cdata(np_rng, size_poly=1)
    out = CData(None, 1, 3, N)
    poly_negacyclic_mul(a, b, out, CHAIN, Q_VALUES)
    for j, q in enumerate(Q_VALUES):
        want = schoolbook_negacyclic(a.view()[0, j].tolist(),
                                     b.view()[0, j].tolist(), q)
        assert out.view()[0, j].tolist() == want
    assert all(d is Domain.COEFFICIENT for d in out.domains)


def test_copy_is_deep(np_rng):
    a = rand_cdata(np_rng)
    c = a.copy()
    c.view()[0, 0, 0] = (a.view()[0, 0, 0] + 1) % Q_VALUES[0]
    assert a.view()[0, 0, 0] != c.view()[0, 0, 0]
    assert c.domains == a.domains

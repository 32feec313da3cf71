"""Parameter validation, profiles, and context precompute."""

import numpy as np
import pytest

from rnsfhe.context import (
    Context,
    EncryptionParams,
    PoolConfig,
    Scheme,
    ValidationError,
    params_for_profile,
)
from rnsfhe.coremath.modmath import ParameterError
from rnsfhe.pools import PoolMode

from tests.conftest import small_params


def test_validation_collects_all_causes():
    bad = EncryptionParams(Scheme.BFV, 100, (15, 15), plain_modulus=4)
    causes = bad.validate()
    assert any("power of two" in c for c in causes)
    assert any("not distinct" in c for c in causes)
    assert any("plain modulus" in c for c in causes)
    with pytest.raises(ValidationError) as err:
        Context(bad)
    assert len(err.value.causes) >= 3


def test_validation_scheme_requirements():
    p = small_params(Scheme.BFV)
    assert p.validate() == []
    no_t = EncryptionParams(Scheme.BFV, p.n, p.coeff_moduli)
    assert any("plain modulus" in c for c in no_t.validate())
    no_scale = EncryptionParams(Scheme.CKKS, p.n, p.coeff_moduli)
    assert any("scale" in c for c in no_scale.validate())


def test_non_ntt_friendly_modulus_rejected():
    # 2^33 + 17 is prime but not 1 mod 2n for n = 64
    p = EncryptionParams(Scheme.BFV, 64, (8589934609,), plain_modulus=65537)
    assert any("mod 2n" in c for c in p.validate())


@pytest.mark.parametrize("profile,n,levels", [
    ("desk4k", 4096, 3),
    ("desk8k", 8192, 6),
    ("pdq", 4096, 13),
])
def test_profiles(profile, n, levels):
    for scheme in Scheme:
        p = params_for_profile(profile, scheme)
        assert p.n == n and p.level_count == levels
        assert p.validate() == []


def test_unknown_profile():
    with pytest.raises(ParameterError):
        params_for_profile("desk1k", Scheme.BFV)


def test_context_precompute(desk4k_bfv):
    ctx = desk4k_bfv
    assert len(ctx.ntt_tables) == 3
    assert ctx.plain_ntt is not None  # 65537 == 1 mod 8192
    assert set(ctx.bases) == {1, 2, 3}
    q = ctx.q_values
    # rescale constants: q_last^{-1} mod q_i at each level
    for level, inv in ctx.last_inv.items():
        for i, v in enumerate(inv.tolist()):
            assert v * q[level - 1] % q[i] == 1
    assert ctx.level_product(3) == q[0] * q[1] * q[2]


def test_galois_elements(desk4k_bfv):
    ctx = desk4k_bfv
    assert ctx.galois_elt_for_step(0) == 1
    assert ctx.galois_elt_for_step(1) == 5
    elt = ctx.galois_elt_for_step(-1)
    assert elt == pow(5, ctx.n // 2 - 1, 2 * ctx.n)
    assert ctx.conj_elt == 2 * ctx.n - 1
    with pytest.raises(ParameterError):
        ctx.galois_elt_for_step(ctx.n // 2)


def test_galois_perm_is_permutation(desk4k_bfv):
    ctx = desk4k_bfv
    perm = ctx.galois_perm(5)
    assert sorted(perm.tolist()) == list(range(ctx.n))
    # conjugation applied twice is the identity
    pc = ctx.galois_perm(ctx.conj_elt)
    assert pc[pc].tolist() == list(range(ctx.n))


def test_pool_config_plumbs_through():
    params = small_params(Scheme.BFV)
    cfg = PoolConfig(unit_mb=1, cap_mb=2, mode=PoolMode.NEVER_RETURN,
                     lanes=2, use_worker_pool=True)
    ctx = Context(params, cfg)
    assert ctx.pool.mode is PoolMode.NEVER_RETURN
    assert ctx.pool.capacity == 2 * (1 << 20)
    assert ctx.worker.lane_count == 2
    off = Context(params, PoolConfig(use_mem_pool=False, use_worker_pool=False))
    assert off.pool is None and off.worker is None

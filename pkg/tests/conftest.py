import numpy as np
import pytest

from rnsfhe.context import Context, EncryptionParams, Scheme, params_for_profile
from rnsfhe.coremath.primes import gen_ntt_prime_chain
from rnsfhe.coremath.sampling import Rng


def seeded_rng(seed: int = 1234) -> Rng:
    return Rng(int(seed).to_bytes(32, "little"))


def small_params(scheme: Scheme, n: int = 64, levels: int = 2,
                 bits: int = 36) -> EncryptionParams:
    moduli = tuple(m.value for m in gen_ntt_prime_chain(bits, n, levels))
    if scheme is Scheme.CKKS:
        return EncryptionParams(scheme, n, moduli,
                                default_scale=float(1 << (bits - 1)))
    return EncryptionParams(scheme, n, moduli, plain_modulus=65537)


@pytest.fixture(scope="session")
def desk4k_bfv():
    return Context(params_for_profile("desk4k", Scheme.BFV))


@pytest.fixture(scope="session")
def desk4k_bgv():
    return Context(params_for_profile("desk4k", Scheme.BGV))


@pytest.fixture(scope="session")
def desk4k_ckks():
    return Context(params_for_profile("desk4k", Scheme.CKKS))


@pytest.fixture(scope="session")
def np_rng():
    return np.random.default_rng(20240703)

"""Exact modular, NTT, CRT, and sampling primitives."""

from .modmath import (
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
from .crt import RnsBase, crt_reconstruct, crt_reconstruct_centered
from .lookup import LookupTable, build_lookup_table, lookup_mod
from .ntt import (
    MATRIX_DEGREE_LIMIT,
    ConfigurationError,
    NttChain,
    NttTables,
    NttVariant,
    ShapeError,
    intt_bm,
    intt_mm,
    ntt_bm,
    ntt_dispatch,
    ntt_mm,
)
from .primes import find_primitive_root, gen_ntt_prime, gen_ntt_prime_chain, min_primitive_root
from .sampling import ERROR_STDDEV, Rng, fresh_seed

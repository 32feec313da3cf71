"""Encryption parameters, validation, and the precomputed context layer.

The Context owns everything that can be computed once per parameter set:
NTT tables for every chain prime (and the plain modulus), lookup-table
moduli, CRT constants per level, Galois permutation maps, and the resource
pools.  It is immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .coremath.crt import RnsBase
from .coremath.lookup import LookupTable, build_lookup_table
from .coremath.modmath import Modulus, ParameterError, inv_mod, is_prime
from .coremath.ntt import NttChain, NttTables, NttVariant
from .coremath.primes import gen_ntt_prime_chain
from .pools import (
    DESK_CAP_MB,
    DESK_UNIT_MB,
    MAX_LEN,
    MemoryPool,
    PoolMode,
    WorkerPool,
)
from .rnspoly import chain_constants

MAX_CHAIN_LEN = 17
MIN_COEFF_BITS = 33
MAX_COEFF_BITS = 61


class Scheme(str, Enum):
    CKKS = "ckks"
    BFV = "bfv"
    BGV = "bgv"


class ValidationError(ParameterError):
    """Raised with the full list of violated parameter invariants."""

    def __init__(self, causes: list[str]):
        self.causes = causes
        super().__init__("; ".join(causes))


@dataclass(frozen=True)
class EncryptionParams:
    scheme: Scheme
    n: int
    coeff_moduli: tuple[int, ...]
    plain_modulus: int | None = None    # BFV/BGV
    default_scale: float | None = None  # CKKS

    @property
    def level_count(self) -> int:
        return len(self.coeff_moduli)

    def validate(self) -> list[str]:
        causes = []
        n = self.n
        if n < 4 or n & (n - 1):
            causes.append(f"n={n} is not a power of two >= 4")
        L = len(self.coeff_moduli)
        if not 1 <= L <= MAX_CHAIN_LEN:
            causes.append(f"chain length {L} outside [1, {MAX_CHAIN_LEN}]")
        if len(set(self.coeff_moduli)) != L:
            causes.append("coefficient moduli are not distinct")
        for q in self.coeff_moduli:
            bits = q.bit_length()
            if not MIN_COEFF_BITS <= bits <= MAX_COEFF_BITS:
                causes.append(f"modulus {q} has {bits} bits, outside "
                              f"[{MIN_COEFF_BITS}, {MAX_COEFF_BITS}]")
                continue
            if not is_prime(q):
                causes.append(f"modulus {q} is not prime")
            elif n >= 4 and (q - 1) % (2 * n) != 0:
                causes.append(f"modulus {q} != 1 mod 2n")
        if self.scheme in (Scheme.BFV, Scheme.BGV):
            t = self.plain_modulus
            if t is None:
                causes.append(f"{self.scheme.value} requires a plain modulus")
            else:
                if not is_prime(t):
                    causes.append(f"plain modulus {t} is not prime")
                if any(q % t == 0 for q in self.coeff_moduli):
                    causes.append("plain modulus divides a coefficient modulus")
        if self.scheme is Scheme.CKKS:
            s = self.default_scale
            if s is None or s <= 0:
                causes.append("ckks requires a positive default scale")
        return causes


# ---------------------------------------------------------------------------
# Shipped parameter profiles.  desk4k/desk8k fit laptop runs; pdq carries the
# depth the query engine needs; big32k is the full-scale profile (L=16,
# 881-bit Q from one 60-bit anchor prime at each end of a 55-bit chain).


def _chain(bits: int, n: int, count: int) -> list[int]:
    return [m.value for m in gen_ntt_prime_chain(bits, n, count)]


def _big_chain(n: int) -> list[int]:
    ends = _chain(60, n, 2)
    middle = _chain(55, n, 14)
    return [ends[0]] + middle + [ends[1]]


_PROFILE_SHAPES = {
    "desk4k": lambda: (4096, _chain(36, 4096, 3)),
    "desk8k": lambda: (8192, _chain(45, 8192, 6)),
    "pdq": lambda: (4096, _chain(45, 4096, 13)),
    "big32k": lambda: (32768, _big_chain(32768)),
}

_DEFAULT_PLAIN_T = 65537  # 2^16 + 1; batching-friendly for every n <= 32768
_profile_cache: dict[tuple, EncryptionParams] = {}


def params_for_profile(profile: str, scheme: Scheme | str) -> EncryptionParams:
    scheme = Scheme(scheme)
    key = (profile, scheme)
    if key in _profile_cache:
        return _profile_cache[key]
    if profile not in _PROFILE_SHAPES:
        raise ParameterError(f"unknown profile {profile!r}; "
                             f"choose from {sorted(_PROFILE_SHAPES)}")
    n, moduli = _PROFILE_SHAPES[profile]()
    if scheme is Scheme.CKKS:
        scale = float(2 ** (moduli[0].bit_length() - 1))
        p = EncryptionParams(scheme, n, tuple(moduli), default_scale=scale)
    else:
        p = EncryptionParams(scheme, n, tuple(moduli), plain_modulus=_DEFAULT_PLAIN_T)
    _profile_cache[key] = p
    return p


# ---------------------------------------------------------------------------


@dataclass
class PoolConfig:
    unit_mb: int = DESK_UNIT_MB
    cap_mb: int = DESK_CAP_MB
    mode: PoolMode = PoolMode.POOLED
    rebalance: bool = False
    use_mem_pool: bool = True
    lanes: int = MAX_LEN
    use_worker_pool: bool = True


class Context:
    """Immutable precompute bundle for one parameter set."""

    def __init__(self, params: EncryptionParams, pool_config: PoolConfig | None = None,
                 ntt_variant: NttVariant | str = NttVariant.AUTO):
        causes = params.validate()
        if causes:
            raise ValidationError(causes)
        cfg = pool_config or PoolConfig()
        self.params = params
        self.n = params.n
        self.moduli = [Modulus(q) for q in params.coeff_moduli]
        self.base = RnsBase(self.moduli)
        self.q_values = list(params.coeff_moduli)
        self.chain_consts = chain_constants(self.q_values)
        self.ntt_tables = [NttTables(params.n, m) for m in self.moduli]
        self.ntt_chain = NttChain(self.ntt_tables, variant=ntt_variant)
        self.lookup_tables = {m.value: build_lookup_table(m) for m in self.moduli}
        self.plain_modulus = (
            Modulus(params.plain_modulus) if params.plain_modulus else None
        )
        self.plain_ntt = None
        if self.plain_modulus is not None and (
            (self.plain_modulus.value - 1) % (2 * params.n) == 0
        ):
            self.plain_ntt = NttTables(params.n, self.plain_modulus)
        # Per-level bases, 1-indexed by chain length.
        self.bases = {
            level: RnsBase(self.moduli[:level])
            for level in range(1, params.level_count + 1)
        }
        # Rescale constants: q_last^{-1} mod q_i for each level.
        self.last_inv = {
            level: np.array(
                [
                    inv_mod(self.q_values[level - 1] % q, Modulus(q))
                    for q in self.q_values[: level - 1]
                ],
                dtype=np.uint64,
            )
            for level in range(2, params.level_count + 1)
        }
        self.pool = None
        if cfg.use_mem_pool:
            self.pool = MemoryPool(params.level_count, cfg.unit_mb, cfg.cap_mb,
                                   mode=cfg.mode, rebalance=cfg.rebalance)
        self.worker = None
        if cfg.use_worker_pool:
            self.worker = WorkerPool(params.level_count, cfg.lanes)
        self.pool_config = cfg
        self._galois_perm_cache: dict[int, np.ndarray] = {}
        self._exp_positions = None

    # -- Galois bookkeeping --------------------------------------------
    def galois_elt_for_step(self, step: int) -> int:
        """Automorphism exponent for a slot rotation by ``step``."""
        half = self.n // 2
        if abs(step) >= half:
            raise ParameterError(f"rotation step {step} out of range (|step| < {half})")
        return pow(5, step % half, 2 * self.n)

    @property
    def conj_elt(self) -> int:
        return 2 * self.n - 1

    def galois_perm(self, elt: int) -> np.ndarray:
        """Gather index for applying x -> x^elt in the evaluation domain:
        out[j] = in[perm[j]] for every residue row."""
        perm = self._galois_perm_cache.get(elt)
        if perm is None:
            exps = self.ntt_tables[0].exponent_map()
            if self._exp_positions is None:
                pos = np.empty(2 * self.n, dtype=np.int64)
                pos[exps] = np.arange(self.n)
                self._exp_positions = pos
            perm = self._exp_positions[(exps * elt) % (2 * self.n)]
            self._galois_perm_cache[elt] = perm
        return perm

    # -- convenience ----------------------------------------------------
    def q_arr(self, level: int | None = None) -> np.ndarray:
        level = level or self.params.level_count
        return self.chain_consts.q[:level]

    def level_product(self, level: int) -> int:
        return self.bases[level].product


def context_new(params: EncryptionParams, pool_config: PoolConfig | None = None) -> Context:
    return Context(params, pool_config)

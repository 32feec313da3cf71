"""Client-side column preparation: digit encryption plus a value ciphertext."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..coremath.modmath import ParameterError
from ..coremath.sampling import Rng, fresh_seed
from ..keys import PublicKey
from ..schemes.ckks import CkksCiphertext
from .config import PdqConfig, digit_decompose
from .evaluator import CkksEval


@dataclass
class EncryptedColumn:
    """One uploaded column: k root-of-unity digit ciphertexts (digit j of
    row r sits in slot r of ciphertext j as omega^d) and the raw values as
    one CKKS ciphertext for aggregation arithmetic."""

    name: str
    digits: list[CkksCiphertext] = field(default_factory=list)
    value: CkksCiphertext | None = None


def digit_slot_vectors(cfg: PdqConfig, values: np.ndarray, slots: int) -> np.ndarray:
    """(k, slots) complex matrix of omega^digit per row; padding rows get
    digit 0 (omega^0 = 1)."""
    rows = len(values)
    digs = np.zeros((cfg.digits, slots), dtype=np.int64)
    for r, v in enumerate(values):
        digs[:, r] = digit_decompose(int(v), cfg.base, cfg.digits)
    return cfg.omega ** digs


def encode_column(ev: CkksEval, cfg: PdqConfig, name: str, values,
                  pk: PublicKey, rng: Rng | None = None) -> EncryptedColumn:
    rng = rng or Rng(fresh_seed())
    values = np.asarray(values, dtype=np.int64)
    if len(values) > ev.slots:
        raise ParameterError(f"{len(values)} rows exceed {ev.slots} slots")
    if values.size and (values.min() < 0 or values.max() >= cfg.value_bound):
        raise ParameterError(f"column {name!r} has values outside "
                             f"[0, {cfg.value_bound})")
    col = EncryptedColumn(name=name)
    for row in digit_slot_vectors(cfg, values, ev.slots):
        col.digits.append(ev.encrypt(row, pk, rng))
    padded = np.zeros(ev.slots)
    padded[: len(values)] = values.astype(float)
    col.value = ev.encrypt(padded, pk, rng)
    return col


def constant_column(ev: CkksEval, cfg: PdqConfig, value: int,
                    pk: PublicKey, rng: Rng | None = None) -> EncryptedColumn:
    """Encrypt one constant broadcast to every row (fresh per query)."""
    vals = np.full(ev.slots, int(value), dtype=np.int64)
    return encode_column(ev, cfg, f"const:{value}", vals, pk, rng)

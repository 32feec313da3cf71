"""Deterministic synthetic datasets and the plaintext query oracle."""

from __future__ import annotations

import numpy as np

from .config import PdqConfig

DEFAULT_SEED = 20240117
COLUMN_NAMES = ("a", "b", "c", "d", "e")


def make_dataset(cfg: PdqConfig, seed: int = DEFAULT_SEED) -> dict:
    """Named uniform columns; zero is excluded so the ratio aggregator's
    plain oracle never divides by zero.  Columns d and e are low-cardinality
    (category-like) so equality predicates between them select a realistic
    nonempty fraction of rows."""
    rng = np.random.default_rng(seed)
    data = {
        name: rng.integers(1, cfg.value_bound, cfg.rows, dtype=np.int64)
        for name in ("a", "b", "c")
    }
    hi = min(16, cfg.value_bound)
    for name in ("d", "e"):
        data[name] = rng.integers(1, hi, cfg.rows, dtype=np.int64)
    return data


def eval_predicate_plain(node, data: dict) -> np.ndarray:
    from .engine import Atom, Not, PredNode

    if isinstance(node, Atom):
        lhs = data[node.lhs]
        rhs = data[node.rhs] if isinstance(node.rhs, str) else node.rhs
        return {
            "<": lhs < rhs, "<=": lhs <= rhs,
            "==": lhs == rhs, "!=": lhs != rhs,
        }[node.op]
    if isinstance(node, Not):
        return ~eval_predicate_plain(node.node, data)
    if isinstance(node, PredNode):
        left = eval_predicate_plain(node.left, data)
        right = eval_predicate_plain(node.right, data)
        return left & right if node.kind == "and" else left | right
    raise TypeError(f"unknown predicate node {node!r}")


def oracle_result(spec, data: dict):
    """Plaintext ground truth for one query.

    index -> bool row mask; sum -> float; avg -> (empty, float);
    ratio -> per-row float vector (0 on non-matching rows).
    """
    mask = eval_predicate_plain(spec.predicate, data)
    if spec.agg == "index":
        return mask
    if spec.agg == "sum":
        return float(data[spec.col][mask].sum())
    if spec.agg == "avg":
        n = int(mask.sum())
        if n == 0:
            return True, 0.0
        return False, float(data[spec.col][mask].sum()) / n
    if spec.agg == "ratio":
        num = data[spec.num].astype(float)
        den = data[spec.den].astype(float)
        out = np.where(mask, num / den ** 2, 0.0)
        return out
    raise ValueError(f"unknown aggregator {spec.agg!r}")

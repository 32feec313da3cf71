"""Server-side query evaluation and the two-party inverse sub-protocol.

The server never sees a plaintext derived from client data: comparisons,
filtering, and aggregation run under CKKS, and division goes through the
blind two-party exchange where the client only ever decrypts a value that
has been multiplied by a random mask the server keeps to itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..coremath.modmath import ParameterError
from ..coremath.sampling import Rng, fresh_seed
from ..keys import PublicKey, SecretKey
from ..schemes.ckks import CkksCiphertext
from .columns import EncryptedColumn, constant_column
from .compare import compare_digit_columns
from .config import PdqConfig
from .evaluator import CkksEval

# Extra bits of scale on the client's reciprocal reply; 1/(r*x) can be as
# small as ~2^-40 for wide columns and would otherwise drown in fresh
# encryption noise.  Bounded above by the end-of-chain modulus budget: the
# final result (values up to 2^16) must still fit at level 2.
RECIP_SCALE_BITS = 26

AGGREGATORS = ("index", "sum", "avg", "ratio")


# -- query description -------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    lhs: str
    op: str
    rhs: str | int


@dataclass(frozen=True)
class Not:
    node: object


@dataclass(frozen=True)
class PredNode:
    kind: str  # "and" | "or"
    left: object
    right: object


@dataclass(frozen=True)
class QuerySpec:
    predicate: object
    agg: str
    col: str | None = None    # sum / avg
    num: str | None = None    # ratio numerator
    den: str | None = None    # ratio denominator

    def to_json(self) -> str:
        return json.dumps({
            "predicate": _node_to_obj(self.predicate),
            "agg": self.agg, "col": self.col,
            "num": self.num, "den": self.den,
        })

    @staticmethod
    def from_json(text: str) -> "QuerySpec":
        obj = json.loads(text)
        if obj.get("agg") not in AGGREGATORS:
            raise ParameterError(f"unknown aggregator {obj.get('agg')!r}")
        return QuerySpec(
            predicate=_node_from_obj(obj["predicate"]),
            agg=obj["agg"], col=obj.get("col"),
            num=obj.get("num"), den=obj.get("den"),
        )


def _node_to_obj(node):
    if isinstance(node, Atom):
        return {"atom": [node.lhs, node.op, node.rhs]}
    if isinstance(node, Not):
        return {"not": _node_to_obj(node.node)}
    if isinstance(node, PredNode):
        return {node.kind: [_node_to_obj(node.left), _node_to_obj(node.right)]}
    raise TypeError(f"unknown predicate node {node!r}")


def _node_from_obj(obj):
    if "atom" in obj:
        lhs, op, rhs = obj["atom"]
        return Atom(lhs, op, rhs)
    if "not" in obj:
        return Not(_node_from_obj(obj["not"]))
    for kind in ("and", "or"):
        if kind in obj:
            left, right = obj[kind]
            return PredNode(kind, _node_from_obj(left), _node_from_obj(right))
    raise ParameterError(f"malformed predicate node {obj!r}")


def predicate_constants(node) -> list[int]:
    """Constant rhs values appearing in a predicate, in traversal order."""
    if isinstance(node, Atom):
        return [] if isinstance(node.rhs, str) else [int(node.rhs)]
    if isinstance(node, Not):
        return predicate_constants(node.node)
    return predicate_constants(node.left) + predicate_constants(node.right)


# -- two-party inverse -------------------------------------------------------


class LocalInverseClient:
    """In-process data holder for the inverse exchange: decrypts the masked
    value, replies with a fresh encryption of its slot-wise reciprocal, and
    performs no ciphertext evaluation."""

    def __init__(self, ev: CkksEval, cfg: PdqConfig, sk: SecretKey,
                 pk: PublicKey, rng: Rng | None = None):
        self.ev = ev
        self.cfg = cfg
        self.sk = sk
        self.pk = pk
        self.rng = rng
        self.trace: list[np.ndarray] = []

    def reciprocal(self, ct: CkksCiphertext):
        vals = self.ev.decrypt(ct, self.sk).real
        self.trace.append(vals.copy())
        flags = np.abs(vals) < self.cfg.recip_threshold
        recip = np.where(flags, 0.0, 1.0 / np.where(flags, 1.0, vals))
        scale = self.ev.ctx.params.default_scale * 2.0 ** RECIP_SCALE_BITS
        fresh = self.ev.encrypt(recip, self.pk, rng=self.rng, scale=scale)
        return fresh, flags


def two_party_multiply_inverse(ev: CkksEval, cfg: PdqConfig,
                               ct: CkksCiphertext, channel,
                               rng: np.random.Generator | None = None):
    """Server half of the inverse exchange: mask, round-trip, unmask."""
    rng = rng or np.random.default_rng()
    e = cfg.mask_exp_range
    r = rng.uniform(2.0 ** -e, 2.0 ** e, ev.slots)
    r *= rng.choice([-1.0, 1.0], ev.slots)
    masked = ev.mul_plain_vec(ct, r)
    fresh, flags = channel.reciprocal(masked)
    return ev.mul_plain_vec(fresh, r), flags


# -- engine ------------------------------------------------------------------


@dataclass
class QueryResult:
    agg: str
    cts: dict[str, CkksCiphertext]
    meta: dict = field(default_factory=dict)


class PdqEngine:
    """One server-side session: uploaded columns plus evaluation state."""

    def __init__(self, ev: CkksEval, cfg: PdqConfig):
        self.ev = ev
        self.cfg = cfg
        self.columns: dict[str, EncryptedColumn] = {}
        validity = np.zeros(ev.slots)
        validity[: cfg.rows] = 1.0
        self.validity = validity

    def add_column(self, col: EncryptedColumn):
        self.columns[col.name] = col

    def _column(self, name: str, temps: dict) -> EncryptedColumn:
        if temps and name in temps:
            return temps[name]
        if name not in self.columns:
            raise ParameterError(f"unknown column {name!r}")
        return self.columns[name]

    def atom_mask(self, atom: Atom, temps: dict) -> CkksCiphertext:
        lhs = self._column(atom.lhs, temps)
        rhs_name = atom.rhs if isinstance(atom.rhs, str) else f"const:{atom.rhs}"
        rhs = self._column(rhs_name, temps)
        return compare_digit_columns(self.ev, lhs.digits, rhs.digits,
                                     self.cfg.base, atom.op)

    def predicate_mask(self, node, temps: dict) -> CkksCiphertext:
        ev = self.ev
        if isinstance(node, Atom):
            return self.atom_mask(node, temps)
        if isinstance(node, Not):
            return ev.one_minus(self.predicate_mask(node.node, temps))
        if isinstance(node, PredNode):
            left = self.predicate_mask(node.left, temps)
            right = self.predicate_mask(node.right, temps)
            both = ev.mul(left, right)
            if node.kind == "and":
                return both
            if node.kind == "or":
                return ev.add(ev.add(left, right), ev.negate(both))
        raise ParameterError(f"unknown predicate node {node!r}")

    def run(self, spec: QuerySpec, channel=None, temps: dict | None = None,
            rng: np.random.Generator | None = None) -> QueryResult:
        ev, temps = self.ev, temps or {}
        mask = self.predicate_mask(spec.predicate, temps)
        # column value ciphertexts are zero on padding rows, so the mask only
        # needs explicit validity filtering where padding slots would feed an
        # aggregate (count) or a reciprocal (ratio denominators)
        if spec.agg == "index":
            return QueryResult("index",
                               {"mask": ev.mul_plain_vec(mask, self.validity)})
        if spec.agg == "sum":
            total = ev.rotate_sum(ev.mul(mask, self._column(spec.col, temps).value))
            return QueryResult("sum", {"sum": total})
        if spec.agg == "avg":
            total = ev.rotate_sum(ev.mul(mask, self._column(spec.col, temps).value))
            count = ev.rotate_sum(mask, pre_vec=self.validity)
            inv, flags = two_party_multiply_inverse(ev, self.cfg, count,
                                                    channel, rng)
            avg = ev.mul(total, inv)
            return QueryResult("avg", {"avg": avg, "count": count},
                               {"recip_flags": flags.tolist()})
        if spec.agg == "ratio":
            mask = ev.mul_plain_vec(mask, self.validity)
            num = ev.mul(mask, self._column(spec.num, temps).value)
            den_sq = ev.square(self._column(spec.den, temps).value)
            masked_den = ev.mul(mask, den_sq)
            # keep non-matching (and padding) denominators away from zero so
            # the client's reciprocal stays finite; the final mask product
            # restores those rows to zero
            denom = ev.add(masked_den, ev.one_minus(mask))
            inv, flags = two_party_multiply_inverse(ev, self.cfg, denom,
                                                    channel, rng)
            out = ev.mul(ev.mul(num, inv), mask)
            return QueryResult("ratio", {"ratio": out},
                               {"recip_flags": flags.tolist()})
        raise ParameterError(f"unknown aggregator {spec.agg!r}")


# -- client-side result interpretation --------------------------------------


def interpret_result(ev: CkksEval, sk: SecretKey, result: QueryResult,
                     rows: int):
    """Decrypt a QueryResult into its plain value (mirrors oracle_result)."""
    if result.agg == "index":
        vals = ev.decrypt(result.cts["mask"], sk).real[:rows]
        return np.round(vals).astype(bool)
    if result.agg == "sum":
        return float(ev.decrypt(result.cts["sum"], sk).real[0])
    if result.agg == "avg":
        count = float(ev.decrypt(result.cts["count"], sk).real[0])
        if round(count) <= 0:
            return True, 0.0
        return False, float(ev.decrypt(result.cts["avg"], sk).real[0])
    if result.agg == "ratio":
        return ev.decrypt(result.cts["ratio"], sk).real[:rows]
    raise ParameterError(f"unknown aggregator {result.agg!r}")


def encrypt_query_constants(ev: CkksEval, cfg: PdqConfig, spec: QuerySpec,
                            pk: PublicKey, rng: Rng | None = None) -> dict:
    """Fresh per-query encryptions of the predicate's constant operands."""
    rng = rng or Rng(fresh_seed())
    temps = {}
    for c in predicate_constants(spec.predicate):
        name = f"const:{c}"
        if name not in temps:
            temps[name] = constant_column(ev, cfg, c, pk, rng)
    return temps


def standard_query(qid: int) -> QuerySpec:
    """The four benchmark queries over columns a..e."""
    if qid == 1:
        return QuerySpec(PredNode("and", Atom("a", "<=", "b"),
                                  Atom("c", "!=", "d")), "index")
    if qid == 2:
        return QuerySpec(PredNode("and", Atom("b", "<=", "c"),
                                  Atom("d", "!=", "e")), "sum", col="a")
    if qid == 3:
        return QuerySpec(Atom("b", "<=", "c"), "ratio", num="a", den="b")
    if qid == 4:
        return QuerySpec(PredNode("and", Atom("b", "<=", "c"),
                                  Atom("d", "==", "e")), "avg", col="a")
    raise ParameterError(f"query id {qid} outside 1..4")

"""Query engine end-to-end against the plaintext oracle on a small dataset."""

import numpy as np
import pytest

from rnsfhe.context import Context, Scheme
from rnsfhe.coremath.modmath import ParameterError
from rnsfhe.keys import galois_keygen, keygen, pk_gen, relin_keygen
from rnsfhe.pdq.columns import encode_column
from rnsfhe.pdq.config import PdqConfig
from rnsfhe.pdq.dataset import COLUMN_NAMES, make_dataset, oracle_result
from rnsfhe.pdq.engine import (
    Atom,
    LocalInverseClient,
    Not,
    PdqEngine,
    PredNode,
    QuerySpec,
    encrypt_query_constants,
    interpret_result,
    predicate_constants,
    standard_query,
    two_party_multiply_inverse,
)
from rnsfhe.pdq.evaluator import CkksEval, rotation_steps

from tests.conftest import seeded_rng, small_params

N = 256
ROWS = 24
CFG = PdqConfig(base=4, digits=2, rows=ROWS, value_bound=16)


@pytest.fixture(scope="module")
def setup():
    ctx = Context(small_params(Scheme.CKKS, n=N, levels=13, bits=45))
    sk = keygen(ctx, seeded_rng(1))
    pk = pk_gen(ctx, sk, seeded_rng(2))
    rlk = relin_keygen(ctx, sk, seeded_rng(3))
    gks = galois_keygen(ctx, sk, rotation_steps(N), seeded_rng(4))
    ev = CkksEval(ctx, rlk, gks)
    data = make_dataset(CFG, seed=7)
    engine = PdqEngine(ev, CFG)
    rng = seeded_rng(5)
    for name in COLUMN_NAMES:
        engine.add_column(encode_column(ev, CFG, name, data[name], pk, rng))
    channel = LocalInverseClient(CkksEval(ctx), CFG, sk, pk, seeded_rng(6))
    return {"ctx": ctx, "sk": sk, "pk": pk, "ev": ev, "data": data,
            "engine": engine, "channel": channel}


@pytest.mark.parametrize("qid", [1, 2, 3, 4])
def test_standard_queries_match_oracle(setup, qid):
    spec = standard_query(qid)
    want = oracle_result(spec, setup["data"])
    result = setup["engine"].run(spec, channel=setup["channel"],
                                 rng=np.random.default_rng(100 + qid))
    got = interpret_result(setup["ev"], setup["sk"], result, ROWS)
    if spec.agg == "index":
        assert got.tolist() == want.tolist()
    elif spec.agg == "sum":
        assert got == pytest.approx(want, rel=1e-3)
    elif spec.agg == "avg":
        assert got[0] == want[0]
        assert got[1] == pytest.approx(want[1], rel=1e-3)
    else:
        assert np.allclose(got, want, rtol=1e-2, atol=1e-3)


def test_index_mask_zero_on_padding(setup):
    result = setup["engine"].run(standard_query(1))
    full = setup["ev"].decrypt(result.cts["mask"], setup["sk"]).real
    assert np.max(np.abs(full[ROWS:])) < 1e-2


def test_avg_on_empty_match(setup):
    # no column value is 0, so the predicate never fires
    spec = QuerySpec(Atom("a", "==", 0), "avg", col="b")
    temps = encrypt_query_constants(setup["ev"], CFG, spec, setup["pk"],
                                    seeded_rng(30))
    assert set(temps) == {"const:0"}
    result = setup["engine"].run(spec, channel=setup["channel"], temps=temps,
                                 rng=np.random.default_rng(31))
    empty, value = interpret_result(setup["ev"], setup["sk"], result, ROWS)
    assert empty is True and value == 0.0


def test_constant_predicate_matches_oracle(setup):
    spec = QuerySpec(Not(Atom("d", "<", 8)), "index")
    temps = encrypt_query_constants(setup["ev"], CFG, spec, setup["pk"],
                                    seeded_rng(32))
    result = setup["engine"].run(spec, temps=temps)
    got = interpret_result(setup["ev"], setup["sk"], result, ROWS)
    want = oracle_result(spec, setup["data"])
    assert got.tolist() == want.tolist()


def test_or_predicate(setup):
    spec = QuerySpec(PredNode("or", Atom("a", "<", "b"), Atom("d", "==", "e")),
                     "index")
    result = setup["engine"].run(spec)
    got = interpret_result(setup["ev"], setup["sk"], result, ROWS)
    assert got.tolist() == oracle_result(spec, setup["data"]).tolist()


def test_two_party_inverse(setup):
    ev, pk, sk = setup["ev"], setup["pk"], setup["sk"]
    x = np.linspace(0.5, 40.0, ev.slots)
    x[3] = 0.0  # below the reciprocal threshold, must be flagged
    ct = ev.encrypt(x, pk, seeded_rng(40))
    inv, flags = two_party_multiply_inverse(ev, CFG, ct, setup["channel"],
                                            np.random.default_rng(41))
    got = ev.decrypt(inv, sk).real
    keep = ~flags
    assert flags[3]
    assert np.allclose(got[keep], 1.0 / x[keep], rtol=1e-3, atol=1e-4)
    assert abs(got[3]) < 1e-3


def test_inverse_client_sees_only_masked_values(setup):
    # the trace recorded by the data holder never contains the raw inputs
    ev, pk = setup["ev"], setup["pk"]
    channel = LocalInverseClient(CkksEval(setup["ctx"]), CFG, setup["sk"], pk,
                                 seeded_rng(42))
    x = np.full(ev.slots, 3.0)
    ct = ev.encrypt(x, pk, seeded_rng(43))
    two_party_multiply_inverse(ev, CFG, ct, channel, np.random.default_rng(44))
    seen = channel.trace[0]
    assert np.min(np.abs(seen - x)) > 1e-3


def test_unknown_column_rejected(setup):
    with pytest.raises(ParameterError):
        setup["engine"].run(QuerySpec(Atom("zz", "<", "a"), "index"))
    with pytest.raises(ParameterError):
        setup["engine"].run(QuerySpec(Atom("a", "<", "b"), "count"))


def test_query_spec_json_roundtrip():
    specs = [standard_query(q) for q in (1, 2, 3, 4)]
    specs.append(QuerySpec(Not(PredNode("or", Atom("a", "<", 3),
                                        Atom("b", "==", "c"))), "index"))
    for spec in specs:
        assert QuerySpec.from_json(spec.to_json()) == spec
    with pytest.raises(ParameterError):
        QuerySpec.from_json('{"predicate": {"atom": ["a", "<", 1]}, "agg": "max"}')
    with pytest.raises(ParameterError):
        QuerySpec.from_json('{"predicate": {"xor": []}, "agg": "index"}')


def test_predicate_constants():
    node = PredNode("and", Atom("a", "<", 5),
                    Not(PredNode("or", Atom("b", "==", "c"), Atom("d", "!=", 9))))
    assert predicate_constants(node) == [5, 9]

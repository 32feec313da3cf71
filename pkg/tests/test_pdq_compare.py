"""Root-of-unity comparison circuits: exhaustive plain-math truth tables,
then an encrypted digit-column comparison against numpy."""

import numpy as np
import pytest

from rnsfhe.context import Context, Scheme
from rnsfhe.coremath.modmath import ParameterError
from rnsfhe.keys import keygen, pk_gen, relin_keygen
from rnsfhe.pdq.columns import digit_slot_vectors, encode_column
from rnsfhe.pdq.compare import COMPARE_OPS, compare_digit_columns, lt_coeffs
from rnsfhe.pdq.config import PdqConfig, digit_decompose, digit_recompose
from rnsfhe.pdq.evaluator import CkksEval

from tests.conftest import seeded_rng, small_params


def test_digit_decompose_roundtrip():
    for p, k in ((2, 5), (4, 3), (5, 4)):
        for v in range(p ** k):
            digs = digit_decompose(v, p, k)
            assert len(digs) == k and all(0 <= d < p for d in digs)
            assert digit_recompose(digs, p) == v
    with pytest.raises(ParameterError):
        digit_decompose(16, 4, 2)
    with pytest.raises(ParameterError):
        digit_decompose(-1, 4, 2)


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_eq_identity_truth_table(p):
    w = np.exp(2j * np.pi / p)
    for a in range(p):
        for b in range(p):
            z, x = w ** a, w ** b
            got = (1 + sum(z ** t * x ** (p - t) for t in range(1, p))) / p
            assert abs(got - (1.0 if a == b else 0.0)) < 1e-9


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_lt_coeffs_truth_table(p):
    w = np.exp(2j * np.pi / p)
    c = lt_coeffs(p)
    for a in range(p):
        for b in range(p):
            got = sum(
                c[t, s] * w ** (a * t) * w ** (b * s)
                for t in range(p) for s in range(p)
            )
            assert abs(got - (1.0 if a < b else 0.0)) < 1e-9


@pytest.mark.parametrize("p", [3, 4, 5])
def test_partition_identity(p):
    # LT(a,b) + LT(b,a) + EQ(a,b) must cover every pair exactly once
    w = np.exp(2j * np.pi / p)
    c = lt_coeffs(p)

    def lt(a, b):
        return sum(c[t, s] * w ** (a * t) * w ** (b * s)
                   for t in range(p) for s in range(p))

    def eq(a, b):
        z, x = w ** a, w ** b
        return (1 + sum(z ** t * x ** (p - t) for t in range(1, p))) / p

    for a in range(p):
        for b in range(p):
            assert abs(lt(a, b) + lt(b, a) + eq(a, b) - 1.0) < 1e-9


def test_digit_slot_vectors():
    cfg = PdqConfig(base=4, digits=2, rows=3, value_bound=16)
    vec = digit_slot_vectors(cfg, np.array([0, 5, 15]), slots=4)
    assert vec.shape == (2, 4)
    w = cfg.omega
    # 5 = 1 + 1*4; 15 = 3 + 3*4; padding row encodes digit 0
    assert np.allclose(vec[:, 0], [1, 1])
    assert np.allclose(vec[:, 1], [w, w])
    assert np.allclose(vec[:, 2], [w ** 3, w ** 3])
    assert np.allclose(vec[:, 3], [1, 1])


# -- encrypted ---------------------------------------------------------------


N = 256
ROWS = 24


@pytest.fixture(scope="module")
def setup():
    ctx = Context(small_params(Scheme.CKKS, n=N, levels=13, bits=45))
    sk = keygen(ctx, seeded_rng(1))
    pk = pk_gen(ctx, sk, seeded_rng(2))
    rlk = relin_keygen(ctx, sk, seeded_rng(3))
    ev = CkksEval(ctx, rlk)
    cfg = PdqConfig(base=4, digits=2, rows=ROWS, value_bound=16)
    return ctx, sk, pk, ev, cfg


def test_compare_digit_columns_encrypted(setup, np_rng):
    ctx, sk, pk, ev, cfg = setup
    a = np_rng.integers(0, 16, ROWS, dtype=np.int64)
    b = np_rng.integers(0, 16, ROWS, dtype=np.int64)
    # force some equal rows so == and <= differ from <
    b[:6] = a[:6]
    ca = encode_column(ev, cfg, "a", a, pk, seeded_rng(10))
    cb = encode_column(ev, cfg, "b", b, pk, seeded_rng(11))
    want = {"<": a < b, "<=": a <= b, "==": a == b, "!=": a != b}
    for op in COMPARE_OPS:
        mask = compare_digit_columns(ev, ca.digits, cb.digits, cfg.base, op)
        got = ev.decrypt(mask, sk).real[:ROWS]
        assert np.max(np.abs(got - want[op])) < 1e-2, op
        assert np.round(got).astype(bool).tolist() == want[op].tolist()


def test_compare_rejects_bad_input(setup):
    ctx, sk, pk, ev, cfg = setup
    col = encode_column(ev, cfg, "a", np.arange(4), pk, seeded_rng(12))
    with pytest.raises(ParameterError):
        compare_digit_columns(ev, col.digits, col.digits, cfg.base, ">=")
    with pytest.raises(ParameterError):
        compare_digit_columns(ev, col.digits, col.digits[:1], cfg.base, "<")

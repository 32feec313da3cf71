"""Wire protocol: framing, chunk lists, the server state machine, and a
full in-process session on a small context."""

import threading

import numpy as np
import pytest

from rnsfhe.context import Context, Scheme
from rnsfhe.coremath.sampling import Rng
from rnsfhe.keys import galois_keygen, keygen, pk_gen, relin_keygen
from rnsfhe.pdq.config import PdqConfig
from rnsfhe.pdq.dataset import COLUMN_NAMES, make_dataset, oracle_result
from rnsfhe.pdq.engine import Atom, LocalInverseClient, QuerySpec, standard_query
from rnsfhe.pdq.evaluator import CkksEval, rotation_steps
from rnsfhe.pdq.protocol import (
    MAX_FRAME,
    MSG_ERROR,
    MSG_QUERY,
    MSG_UPLOAD_COLUMN,
    InprocTransport,
    PdqClient,
    PdqServer,
    ProtocolError,
    pack_chunks,
    pack_frame,
    parse_frame,
    send_frame,
    unpack_chunks,
)

from tests.conftest import small_params

# -- framing -----------------------------------------------------------------


def test_frame_roundtrip():
    data = pack_frame(3, 42, b"hello")
    assert parse_frame(data) == (3, 42, b"hello")
    assert parse_frame(pack_frame(7, 0, b"")) == (7, 0, b"")


def test_short_frame_rejected():
    with pytest.raises(ProtocolError):
        parse_frame(b"\x01\x02")


def test_length_mismatch_rejected():
    data = pack_frame(3, 42, b"hello")
    with pytest.raises(ProtocolError):
        parse_frame(data + b"extra")
    with pytest.raises(ProtocolError):
        parse_frame(data[:-1])


def test_oversize_frame_rejected():
    import struct

    head = struct.pack("<IBQ", MAX_FRAME + 1, 3, 42)
    with pytest.raises(ProtocolError):
        parse_frame(head)


def test_chunks_roundtrip():
    for chunks in ([], [b""], [b"a", b"", b"bc" * 100]):
        assert unpack_chunks(pack_chunks(chunks)) == chunks


def test_chunk_overrun_rejected():
    import struct

    payload = struct.pack("<II", 1, 100) + b"short"
    with pytest.raises(ProtocolError):
        unpack_chunks(payload)


def test_trailing_bytes_rejected():
    with pytest.raises(ProtocolError):
        unpack_chunks(pack_chunks([b"ab"]) + b"junk")


def test_truncated_chunk_count_rejected():
    with pytest.raises(ProtocolError):
        unpack_chunks(b"\x01")


# -- sessions ----------------------------------------------------------------


N = 256
ROWS = 24
CFG = PdqConfig(base=4, digits=2, rows=ROWS, value_bound=16)


def tiny_client(transport, cfg, ctx, seed: int) -> PdqClient:
    """PdqClient wired to a custom (small) context instead of a profile."""
    c = PdqClient.__new__(PdqClient)
    c.transport = transport
    c.cfg = cfg
    c.session_id = 1
    c.rng = Rng(int(seed).to_bytes(32, "little"))
    c.ctx = ctx
    c.sk = keygen(ctx, c.rng)
    c.pk = pk_gen(ctx, c.sk, c.rng)
    c.relin = relin_keygen(ctx, c.sk, c.rng)
    c.galois = galois_keygen(ctx, c.sk, rotation_steps(ctx.n), c.rng)
    c.ev = CkksEval(ctx)
    c.inverse = LocalInverseClient(c.ev, cfg, c.sk, c.pk, rng=c.rng)
    return c


@pytest.fixture(scope="module")
def wire():
    ctx = Context(small_params(Scheme.CKKS, n=N, levels=13, bits=45))
    server = PdqServer(mask_seed=123)
    server_end, client_end = InprocTransport.pair()
    thread = threading.Thread(target=server.serve, args=(server_end,),
                              daemon=True)
    thread.start()
    client = tiny_client(client_end, CFG, ctx, seed=9)
    data = make_dataset(CFG, seed=7)
    yield {"client": client, "server": server, "data": data}
    client.close()
    thread.join(timeout=10)


def test_column_before_context_is_error(wire):
    tr = wire["client"].transport
    send_frame(tr, MSG_UPLOAD_COLUMN, 55, pack_chunks([b"{}"]))
    msg_type, session, payload = tr.recv_frame()
    assert msg_type == MSG_ERROR and session == 55
    assert b"context" in payload


def test_unknown_frame_type_is_error(wire):
    tr = wire["client"].transport
    send_frame(tr, 99, 56, b"")
    msg_type, _sid, payload = tr.recv_frame()
    assert msg_type == MSG_ERROR
    assert b"unknown frame type" in payload


def test_upload_context_and_columns(wire):
    reply = wire["client"].upload_context()
    assert reply["ok"] and reply["state"] == "await_columns"
    for name in COLUMN_NAMES:
        reply = wire["client"].upload_column(name, wire["data"][name])
    assert reply["state"] == "ready"
    assert reply["columns"] == sorted(COLUMN_NAMES)


def test_duplicate_context_rejected(wire):
    with pytest.raises(ProtocolError, match="already uploaded"):
        wire["client"].upload_context()


def test_malformed_frame_keeps_session_alive(wire):
    tr = wire["client"].transport
    tr.send_bytes(b"\x00garbage")
    msg_type, _sid, payload = tr.recv_frame()
    assert msg_type == MSG_ERROR
    # the session survives: a normal query still runs
    spec = standard_query(1)
    got, meta = wire["client"].run_query(spec)
    assert meta["ok"]
    assert got.tolist() == oracle_result(spec, wire["data"]).tolist()


def test_bad_query_spec_is_recoverable(wire):
    tr = wire["client"].transport
    send_frame(tr, MSG_QUERY, 1, pack_chunks([b'{"spec": "not json}']))
    msg_type, _sid, _payload = tr.recv_frame()
    assert msg_type == MSG_ERROR
    spec = QuerySpec(Atom("d", "==", "e"), "index")
    got, _meta = wire["client"].run_query(spec)
    assert got.tolist() == oracle_result(spec, wire["data"]).tolist()


def test_query_with_constant_over_wire(wire):
    spec = QuerySpec(Atom("d", "<", 8), "index")
    got, _meta = wire["client"].run_query(spec)
    assert got.tolist() == oracle_result(spec, wire["data"]).tolist()


def test_avg_query_runs_inverse_exchange(wire):
    spec = standard_query(4)
    before = len(wire["client"].inverse.trace)
    got, meta = wire["client"].run_query(spec)
    assert len(wire["client"].inverse.trace) == before + 1
    empty, want = oracle_result(spec, wire["data"])
    assert got[0] == empty
    assert got[1] == pytest.approx(want, rel=1e-3)
    assert "recip_flags" in meta["meta"]


def test_sum_query_over_wire(wire):
    spec = standard_query(2)
    got, _meta = wire["client"].run_query(spec)
    assert got == pytest.approx(oracle_result(spec, wire["data"]), rel=1e-3)


def test_ratio_query_over_wire(wire):
    spec = standard_query(3)
    got, _meta = wire["client"].run_query(spec)
    want = oracle_result(spec, wire["data"])
    assert np.allclose(got, want, rtol=1e-2, atol=1e-3)
    assert wire["server"].sessions[1].queries_run >= 4

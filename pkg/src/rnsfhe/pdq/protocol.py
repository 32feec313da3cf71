"""Framed wire protocol for the two-party query sessions.

Frame layout: length u32 | type u8 | session u64 | payload.  Payloads are
length-prefixed chunk lists of serialized records and small JSON headers.
The server is a per-session state machine (AwaitContext -> AwaitColumns ->
Ready); a malformed or out-of-order frame draws an Error reply and leaves
the session state untouched.  Context, pools, and precomputed tables live
for the whole session, while query condition constants arrive freshly
encrypted with each Query frame.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field
from queue import Queue

import numpy as np

from ..context import Context, Scheme, params_for_profile
from ..coremath.sampling import Rng, fresh_seed
from ..keys import keygen, pk_gen
from ..schemes.ckks import CkksCiphertext
from ..serial import (
    KIND_CIPHERTEXT,
    SerializationError,
    deserialize_block,
    deserialize_galois_keys,
    deserialize_kswitch_key,
    deserialize_params,
    deserialize_public_key,
    serialize_block,
    serialize_galois_keys,
    serialize_kswitch_key,
    serialize_params,
    serialize_public_key,
)
from ..keys import galois_keygen, relin_keygen
from .columns import EncryptedColumn, encode_column
from .config import PdqConfig
from .dataset import make_dataset
from .engine import (
    LocalInverseClient,
    PdqEngine,
    QueryResult,
    QuerySpec,
    encrypt_query_constants,
    interpret_result,
)
from .evaluator import CkksEval, rotation_steps

MAX_FRAME = 1 << 28  # 256 MB; anything larger is rejected outright

MSG_UPLOAD_CONTEXT = 1
MSG_UPLOAD_COLUMN = 2
MSG_QUERY = 3
MSG_MASKED_CT = 4
MSG_RECIPROCAL_CT = 5
MSG_RESULT = 6
MSG_ERROR = 7

_KNOWN_TYPES = frozenset(range(MSG_UPLOAD_CONTEXT, MSG_ERROR + 1))

_HEADER = struct.Struct("<IBQ")


class ProtocolError(Exception):
    pass


# -- framing -----------------------------------------------------------------


def pack_frame(msg_type: int, session: int, payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds limit")
    return _HEADER.pack(len(payload), msg_type, session) + payload


def parse_frame(data: bytes):
    """Split one wire frame into (msg_type, session, payload)."""
    if len(data) < _HEADER.size:
        raise ProtocolError("short frame")
    length, msg_type, session = _HEADER.unpack_from(data)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise ProtocolError("frame length mismatch")
    return msg_type, session, payload


def pack_chunks(chunks: list[bytes]) -> bytes:
    out = [struct.pack("<I", len(chunks))]
    for c in chunks:
        out.append(struct.pack("<I", len(c)))
        out.append(c)
    return b"".join(out)


def unpack_chunks(payload: bytes) -> list[bytes]:
    try:
        (count,) = struct.unpack_from("<I", payload, 0)
        off = 4
        out = []
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", payload, off)
            off += 4
            if off + ln > len(payload):
                raise ProtocolError("chunk overruns payload")
            out.append(payload[off: off + ln])
            off += ln
        if off != len(payload):
            raise ProtocolError("trailing bytes after chunks")
        return out
    except struct.error as exc:
        raise ProtocolError(f"malformed chunk list: {exc}") from None


# -- transports --------------------------------------------------------------


class InprocTransport:
    """Two queue-backed endpoints in one process."""

    def __init__(self, rx: Queue, tx: Queue):
        self._rx, self._tx = rx, tx

    @staticmethod
    def pair() -> tuple["InprocTransport", "InprocTransport"]:
        a, b = Queue(), Queue()
        return InprocTransport(a, b), InprocTransport(b, a)

    def send_bytes(self, data: bytes):
        self._tx.put(data)

    def close(self):
        self._tx.put(None)

    def recv_frame(self):
        data = self._rx.get()
        if data is None:
            return None
        return parse_frame(data)


class SocketTransport:
    """Length-delimited frames over a stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send_bytes(self, data: bytes):
        self.sock.sendall(data)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def _read_exact(self, count: int) -> bytes | None:
        buf = b""
        while len(buf) < count:
            chunk = self.sock.recv(count - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def recv_frame(self):
        head = self._read_exact(_HEADER.size)
        if head is None:
            return None
        length, msg_type, session = _HEADER.unpack_from(head)
        if length > MAX_FRAME:
            raise ProtocolError(f"frame of {length} bytes exceeds limit")
        payload = self._read_exact(length)
        if payload is None:
            raise ProtocolError("connection dropped mid-frame")
        return msg_type, session, payload


def send_frame(transport, msg_type: int, session: int, payload: bytes):
    transport.send_bytes(pack_frame(msg_type, session, payload))


# -- server ------------------------------------------------------------------


AWAIT_CONTEXT = "await_context"
AWAIT_COLUMNS = "await_columns"
READY = "ready"


@dataclass
class _Session:
    state: str = AWAIT_CONTEXT
    cfg: PdqConfig | None = None
    ctx: Context | None = None
    ev: CkksEval | None = None
    engine: PdqEngine | None = None
    queries_run: int = 0
    meta: dict = field(default_factory=dict)


class _WireInverseChannel:
    """Engine-facing handle that runs the inverse exchange over the wire."""

    def __init__(self, server: "PdqServer", transport, session_id: int,
                 session: _Session):
        self.server = server
        self.transport = transport
        self.session_id = session_id
        self.session = session

    def reciprocal(self, ct: CkksCiphertext):
        params = self.session.ctx.params
        send_frame(self.transport, MSG_MASKED_CT, self.session_id,
                   pack_chunks([serialize_block(params, KIND_CIPHERTEXT,
                                                ct.data, scale=ct.scale)]))
        frame = self.transport.recv_frame()
        if frame is None:
            raise ProtocolError("peer closed during inverse exchange")
        msg_type, _sid, payload = frame
        if msg_type != MSG_RECIPROCAL_CT:
            raise ProtocolError(f"expected reciprocal frame, got type {msg_type}")
        meta_raw, ct_raw = unpack_chunks(payload)
        meta = json.loads(meta_raw)
        cd, rec = deserialize_block(params, ct_raw, KIND_CIPHERTEXT)
        fresh = CkksCiphertext(cd, rec.scale, rec.level)
        return fresh, np.asarray(meta["flags"], dtype=bool)


class PdqServer:
    """Query executor; holds no secret key and sees no client plaintext."""

    def __init__(self, mask_seed: int | None = None, pool_config=None,
                 ntt_variant="auto"):
        self.sessions: dict[int, _Session] = {}
        self.mask_rng = np.random.default_rng(mask_seed)
        self.pool_config = pool_config
        self.ntt_variant = ntt_variant

    def serve(self, transport):
        """Handle frames until the peer closes the transport."""
        while True:
            try:
                frame = transport.recv_frame()
            except ProtocolError as exc:
                self._error(transport, 0, str(exc))
                continue
            if frame is None:
                return
            msg_type, session_id, payload = frame
            try:
                self._dispatch(transport, msg_type, session_id, payload)
            except (ProtocolError, SerializationError, ValueError,
                    KeyError) as exc:
                self._error(transport, session_id, str(exc))

    def _error(self, transport, session_id: int, message: str):
        body = json.dumps({"error": message}).encode()
        send_frame(transport, MSG_ERROR, session_id, body)

    def _dispatch(self, transport, msg_type: int, session_id: int,
                  payload: bytes):
        if msg_type not in _KNOWN_TYPES:
            raise ProtocolError(f"unknown frame type {msg_type}")
        sess = self.sessions.setdefault(session_id, _Session())
        if msg_type == MSG_UPLOAD_CONTEXT:
            self._handle_context(transport, session_id, sess, payload)
        elif msg_type == MSG_UPLOAD_COLUMN:
            self._handle_column(transport, session_id, sess, payload)
        elif msg_type == MSG_QUERY:
            self._handle_query(transport, session_id, sess, payload)
        else:
            raise ProtocolError(f"unexpected frame type {msg_type} "
                                f"in state {sess.state}")

    def _handle_context(self, transport, session_id, sess, payload):
        if sess.state != AWAIT_CONTEXT:
            raise ProtocolError(f"context already uploaded (state {sess.state})")
        cfg_raw, params_raw, pk_raw, relin_raw, galois_raw = unpack_chunks(payload)
        cfg = PdqConfig(**json.loads(cfg_raw))
        params = deserialize_params(params_raw)
        ctx = Context(params, self.pool_config, ntt_variant=self.ntt_variant)
        pk = deserialize_public_key(ctx, pk_raw)
        relin = deserialize_kswitch_key(ctx, relin_raw)
        galois = deserialize_galois_keys(ctx, galois_raw)
        sess.cfg = cfg
        sess.ctx = ctx
        sess.ev = CkksEval(ctx, relin, galois)
        sess.engine = PdqEngine(sess.ev, cfg)
        sess.meta["pk"] = pk
        sess.state = AWAIT_COLUMNS
        self._ok(transport, session_id, {"state": sess.state})

    def _handle_column(self, transport, session_id, sess, payload):
        if sess.state not in (AWAIT_COLUMNS, READY):
            raise ProtocolError("column upload before context")
        col = self._column_from_chunks(sess, unpack_chunks(payload))
        sess.engine.add_column(col)
        sess.state = READY
        self._ok(transport, session_id,
                 {"state": sess.state, "columns": sorted(sess.engine.columns)})

    def _column_from_chunks(self, sess, chunks) -> EncryptedColumn:
        params = sess.ctx.params
        name = json.loads(chunks[0])["name"]
        if len(chunks) != 2 + sess.cfg.digits:
            raise ProtocolError(f"column payload needs {sess.cfg.digits} "
                                f"digit ciphertexts")

        def ct(raw):
            cd, rec = deserialize_block(params, raw, KIND_CIPHERTEXT)
            return CkksCiphertext(cd, rec.scale, rec.level)

        col = EncryptedColumn(name=name, digits=[ct(c) for c in chunks[2:]],
                              value=ct(chunks[1]))
        return col

    def _handle_query(self, transport, session_id, sess, payload):
        if sess.state != READY:
            raise ProtocolError(f"query in state {sess.state}")
        chunks = unpack_chunks(payload)
        head = json.loads(chunks[0])
        spec = QuerySpec.from_json(head["spec"])
        temps = {}
        off = 1
        for _ in range(head.get("temp_columns", 0)):
            count = 2 + sess.cfg.digits
            col = self._column_from_chunks(sess, chunks[off: off + count])
            temps[col.name] = col
            off += count
        channel = _WireInverseChannel(self, transport, session_id, sess)
        result = sess.engine.run(spec, channel=channel, temps=temps,
                                 rng=self.mask_rng)
        sess.queries_run += 1
        self._send_result(transport, session_id, sess, result)

    def _send_result(self, transport, session_id, sess, result: QueryResult):
        params = sess.ctx.params
        names = sorted(result.cts)
        meta = {"ok": True, "agg": result.agg, "cts": names,
                "meta": result.meta}
        chunks = [json.dumps(meta).encode()]
        for name in names:
            ct = result.cts[name]
            chunks.append(serialize_block(params, KIND_CIPHERTEXT, ct.data,
                                          scale=ct.scale))
        send_frame(transport, MSG_RESULT, session_id, pack_chunks(chunks))

    def _ok(self, transport, session_id, extra: dict):
        meta = {"ok": True}
        meta.update(extra)
        chunks = [json.dumps(meta).encode()]
        send_frame(transport, MSG_RESULT, session_id, pack_chunks(chunks))


# -- client ------------------------------------------------------------------


class PdqClient:
    """Data holder: owns the secret key, uploads columns, decrypts results."""

    def __init__(self, transport, cfg: PdqConfig, seed: int | None = None,
                 session_id: int = 1, pool_config=None):
        self.transport = transport
        self.cfg = cfg
        self.session_id = session_id
        entropy = (fresh_seed() if seed is None
                   else int(seed).to_bytes(32, "little"))
        self.rng = Rng(entropy)
        params = params_for_profile(cfg.profile, Scheme.CKKS)
        self.ctx = Context(params, pool_config)
        self.sk = keygen(self.ctx, self.rng)
        self.pk = pk_gen(self.ctx, self.sk, self.rng)
        self.relin = relin_keygen(self.ctx, self.sk, self.rng)
        self.galois = galois_keygen(self.ctx, self.sk,
                                    rotation_steps(self.ctx.n), self.rng)
        self.ev = CkksEval(self.ctx)
        self.inverse = LocalInverseClient(self.ev, cfg, self.sk, self.pk,
                                          rng=self.rng)

    # -- low-level ------------------------------------------------------
    def _send(self, msg_type: int, payload: bytes):
        send_frame(self.transport, msg_type, self.session_id, payload)

    def _await_result(self) -> list[bytes]:
        """Wait for the terminal Result frame, answering inverse requests."""
        while True:
            frame = self.transport.recv_frame()
            if frame is None:
                raise ProtocolError("server closed the transport")
            msg_type, _sid, payload = frame
            if msg_type == MSG_ERROR:
                raise ProtocolError(json.loads(payload)["error"])
            if msg_type == MSG_MASKED_CT:
                self._answer_inverse(payload)
                continue
            if msg_type == MSG_RESULT:
                return unpack_chunks(payload)
            raise ProtocolError(f"unexpected frame type {msg_type}")

    def _answer_inverse(self, payload: bytes):
        (ct_raw,) = unpack_chunks(payload)
        cd, rec = deserialize_block(self.ctx.params, ct_raw, KIND_CIPHERTEXT)
        ct = CkksCiphertext(cd, rec.scale, rec.level)
        fresh, flags = self.inverse.reciprocal(ct)
        chunks = [
            json.dumps({"flags": flags.tolist()}).encode(),
            serialize_block(self.ctx.params, KIND_CIPHERTEXT, fresh.data,
                            scale=fresh.scale),
        ]
        self._send(MSG_RECIPROCAL_CT, pack_chunks(chunks))

    # -- protocol steps -------------------------------------------------
    def upload_context(self) -> dict:
        params = self.ctx.params
        cfg = self.cfg
        payload = pack_chunks([
            json.dumps({
                "base": cfg.base, "digits": cfg.digits, "rows": cfg.rows,
                "value_bound": cfg.value_bound, "profile": cfg.profile,
                "mask_exp_range": cfg.mask_exp_range,
                "recip_threshold": cfg.recip_threshold,
            }).encode(),
            serialize_params(params),
            serialize_public_key(params, self.pk, seeded=True),
            serialize_kswitch_key(params, self.relin),
            serialize_galois_keys(params, self.galois),
        ])
        self._send(MSG_UPLOAD_CONTEXT, payload)
        return json.loads(self._await_result()[0])

    def _column_chunks(self, col: EncryptedColumn) -> list[bytes]:
        params = self.ctx.params
        chunks = [json.dumps({"name": col.name}).encode(),
                  serialize_block(params, KIND_CIPHERTEXT, col.value.data,
                                  scale=col.value.scale)]
        for ct in col.digits:
            chunks.append(serialize_block(params, KIND_CIPHERTEXT, ct.data,
                                          scale=ct.scale))
        return chunks

    def upload_column(self, name: str, values) -> dict:
        col = encode_column(self.ev, self.cfg, name, values, self.pk, self.rng)
        self._send(MSG_UPLOAD_COLUMN, pack_chunks(self._column_chunks(col)))
        return json.loads(self._await_result()[0])

    def run_query(self, spec: QuerySpec):
        """Execute one query; returns (plain_result, meta)."""
        temps = encrypt_query_constants(self.ev, self.cfg, spec, self.pk,
                                        self.rng)
        chunks = [json.dumps({"spec": spec.to_json(),
                              "temp_columns": len(temps)}).encode()]
        for col in temps.values():
            chunks.extend(self._column_chunks(col))
        self._send(MSG_QUERY, pack_chunks(chunks))
        reply = self._await_result()
        meta = json.loads(reply[0])
        result = QueryResult(meta["agg"], {}, meta.get("meta", {}))
        for name, raw in zip(meta["cts"], reply[1:]):
            cd, rec = deserialize_block(self.ctx.params, raw, KIND_CIPHERTEXT)
            result.cts[name] = CkksCiphertext(cd, rec.scale, rec.level)
        return interpret_result(self.ev, self.sk, result, self.cfg.rows), meta

    def close(self):
        self.transport.close()

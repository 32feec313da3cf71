"""FastAPI wrapper around the framed query protocol.

The HTTP layer is a frame tunnel: each POST carries one protocol frame,
the response carries every frame the server emits up to the next point
where it needs client input.  That keeps the entire protocol state machine
(and its tests) in one place; HTTP adds only transport and encoding.
"""

from __future__ import annotations

import base64
import threading
from contextlib import asynccontextmanager
from queue import Empty, Queue

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .. import __version__
from ..pdq.protocol import (
    MSG_ERROR,
    MSG_MASKED_CT,
    MSG_RESULT,
    PdqServer,
    ProtocolError,
    parse_frame,
)

# frame types after which the server has nothing more to say until the
# client speaks again
_TURN_ENDERS = frozenset({MSG_RESULT, MSG_ERROR, MSG_MASKED_CT})

EXCHANGE_TIMEOUT_S = 120.0


class FrameIn(BaseModel):
    frame: str  # base64-encoded wire frame


class FramesOut(BaseModel):
    frames: list[str]


class _QueueTransport:
    """Server-side endpoint fed by HTTP handlers."""

    def __init__(self):
        self.inbox: Queue = Queue()
        self.outbox: Queue = Queue()

    def recv_frame(self):
        data = self.inbox.get()
        if data is None:
            return None
        return parse_frame(data)

    def send_bytes(self, data: bytes):
        self.outbox.put(data)

    def close(self):
        self.inbox.put(None)


class ServiceState:
    """One protocol server on a background thread, shared by all requests."""

    def __init__(self, mask_seed: int | None = None):
        self.server = PdqServer(mask_seed=mask_seed)
        self.transport = _QueueTransport()
        self.lock = threading.Lock()
        self.thread = threading.Thread(
            target=self.server.serve, args=(self.transport,), daemon=True)
        self.thread.start()

    def exchange(self, frame: bytes) -> list[bytes]:
        """Push one frame, collect replies until the server yields the turn."""
        with self.lock:
            self.transport.inbox.put(frame)
            out = []
            while True:
                try:
                    data = self.transport.outbox.get(timeout=EXCHANGE_TIMEOUT_S)
                except Empty:
                    raise ProtocolError("server produced no reply in time")
                out.append(data)
                msg_type, _, _ = parse_frame(data)
                if msg_type in _TURN_ENDERS:
                    return out

    def shutdown(self):
        self.transport.close()
        self.thread.join(timeout=5)


def create_app(mask_seed: int | None = None) -> FastAPI:
    state = ServiceState(mask_seed=mask_seed)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        state.shutdown()

    app = FastAPI(title="rnsfhe query service", version=__version__,
                  lifespan=lifespan)
    app.state.service = state

    @app.get("/v1/health")
    def health():
        return {"ok": True, "version": __version__}

    @app.post("/v1/frames", response_model=FramesOut)
    def frames(body: FrameIn):
        try:
            raw = base64.b64decode(body.frame, validate=True)
        except ValueError:
            raise HTTPException(status_code=400, detail="frame is not base64")
        try:
            replies = state.exchange(raw)
        except ProtocolError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return FramesOut(
            frames=[base64.b64encode(r).decode() for r in replies])

    return app

"""Client-side transport that tunnels protocol frames over HTTP."""

from __future__ import annotations

import base64
from collections import deque

from ..pdq.protocol import ProtocolError, parse_frame


class HttpTransport:
    """Drop-in transport for PdqClient backed by the /v1/frames endpoint.

    Every send is one POST; the response frames queue up locally and feed
    subsequent recv_frame calls.  The protocol is strictly client-driven,
    so a recv with nothing queued is a protocol bug, not a wait state.
    """

    def __init__(self, base_url: str, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self._http = session or requests.Session()
        self._pending: deque[bytes] = deque()
        self._closed = False

    def send_bytes(self, data: bytes):
        if self._closed:
            raise ProtocolError("transport is closed")
        resp = self._http.post(
            self.base_url + "/v1/frames",
            json={"frame": base64.b64encode(data).decode()},
        )
        if resp.status_code != 200:
            raise ProtocolError(f"service error {resp.status_code}: {resp.text}")
        for item in resp.json()["frames"]:
            self._pending.append(base64.b64decode(item))

    def recv_frame(self):
        if not self._pending:
            if self._closed:
                return None
            raise ProtocolError("no reply frame pending")
        return parse_frame(self._pending.popleft())

    def close(self):
        self._closed = True

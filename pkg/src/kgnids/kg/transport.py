"""Request/response transports with JSONL record and replay.

A request is a plain dict ``{"method", "url", "params"?, "headers"?, "json"?}``
and a response is ``{"status": int, "json": ..., "text"?: str}``.  Clients in
this package only ever talk to a transport, so a recorded fixture file is
enough to run the crawl/extraction/embedding stages offline.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Protocol

logger = logging.getLogger(__name__)

# never written to fixtures
_SECRET_HEADERS = {"authorization", "x-api-key", "api-key"}


class TransportError(RuntimeError):
    """Network-level failure; callers may retry."""


class ReplayMiss(TransportError):
    pass


class Transport(Protocol):
    def send(self, request: dict) -> dict: ...


def request_key(request: dict) -> str:
    """Canonical form used to match a live request against a recording."""
    clean = dict(request)
    if "headers" in clean:
        clean["headers"] = {k: v for k, v in clean["headers"].items()
                            if k.lower() not in _SECRET_HEADERS}
    return json.dumps(clean, sort_keys=True, separators=(",", ":"))


class HttpTransport:
    def __init__(self, timeout: float = 30.0, session=None):
        import requests

        self.timeout = timeout
        self.session = session or requests.Session()
        self._exc = requests.RequestException

    def send(self, request: dict) -> dict:
        try:
            resp = self.session.request(
                request.get("method", "GET"), request["url"],
                params=request.get("params"), headers=request.get("headers"),
                json=request.get("json"), timeout=self.timeout)
        except self._exc as exc:
            raise TransportError(f"{request.get('method', 'GET')} {request['url']}: {exc}") from exc
        out = {"status": resp.status_code, "headers": dict(resp.headers)}
        try:
            out["json"] = resp.json()
        except ValueError:
            out["text"] = resp.text
        return out


class RecordingTransport:
    """Forward to ``inner`` and append every exchange to a JSONL file."""

    def __init__(self, inner: Transport, path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def send(self, request: dict) -> dict:
        response = self.inner.send(request)
        line = json.dumps({"request": json.loads(request_key(request)),
                           "response": {k: v for k, v in response.items() if k != "headers"}},
                          sort_keys=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return response


class ReplayTransport:
    """Serve responses from recorded ``{request, response}`` pairs.

    Identical requests recorded several times are answered in recording order.
    """

    def __init__(self, pairs):
        self._queues = defaultdict(deque)
        for pair in pairs:
            self._queues[request_key(pair["request"])].append(pair["response"])
        self.calls = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ReplayTransport":
        with open(path, encoding="utf-8") as fh:
            return cls(json.loads(line) for line in fh if line.strip())

    def send(self, request: dict) -> dict:
        key = request_key(request)
        with self._lock:
            self.calls.append(json.loads(key))
            queue = self._queues.get(key)
            if not queue:
                raise ReplayMiss(f"no recorded response for {request.get('method', 'GET')} "
                                 f"{request.get('url')}")
            return queue.popleft() if len(queue) > 1 else queue[0]


class CallbackTransport:
    """Answer requests with a Python function; handy for scripted fakes."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def send(self, request: dict) -> dict:
        self.calls.append(request)
        return self.fn(request)


class RateLimiter:
    """Minimum spacing between outbound calls, shared across threads."""

    def __init__(self, min_interval: float = 0.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            now = self._clock()
            if now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.min_interval

"""Synthetic test services whose output size is a fixed function of the input."""

from __future__ import annotations

import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import BindError, FormatError
from ..values import Blob, TupleValue, Value, from_json, to_json

log = logging.getLogger(__name__)

DOUBLE = "double"
SAME_SIZE = "same-size"
AGGREGATE_DOUBLE = "aggregate-double"
BEHAVIORS = (DOUBLE, SAME_SIZE, AGGREGATE_DOUBLE)

DEFAULT_COMPUTE_DELAY_MS = 5.0


@dataclass(frozen=True)
class TestServiceSpec:
    __test__ = False  # not a pytest class

    name: str
    behavior: str
    compute_delay_ms: float = DEFAULT_COMPUTE_DELAY_MS
    host: str = "127.0.0.1"
    port: int = 0
    jitter: float = 0.0  # same-size only: relative size noise, at most 0.01

    def __post_init__(self) -> None:
        if self.behavior not in BEHAVIORS:
            raise FormatError("$.behavior", f"unknown behavior {self.behavior!r}")
        if not 0.0 <= self.jitter <= 0.01:
            raise FormatError("$.jitter", "jitter must lie in [0, 0.01]")
        if self.compute_delay_ms < 0:
            raise FormatError("$.compute_delay_ms", "must be >= 0")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "behavior": self.behavior,
            "compute_delay_ms": self.compute_delay_ms,
            "host": self.host,
            "port": self.port,
            "jitter": self.jitter,
        }

    @classmethod
    def from_json(cls, doc: dict) -> TestServiceSpec:
        try:
            return cls(
                doc["name"],
                doc["behavior"],
                float(doc.get("compute_delay_ms", DEFAULT_COMPUTE_DELAY_MS)),
                doc.get("host", "127.0.0.1"),
                int(doc.get("port", 0)),
                float(doc.get("jitter", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("$.services", str(exc)) from exc


def output_size(behavior: str, input_sizes: list[int], rng: random.Random | None = None, jitter: float = 0.0) -> int:
    """Size rule shared by the live services and the simulator."""
    total = sum(input_sizes)
    if behavior == DOUBLE:
        return 2 * total
    if behavior == AGGREGATE_DOUBLE:
        return 2 * total
    if jitter and rng is not None:
        return max(0, round(total * (1.0 + rng.uniform(-jitter, jitter))))
    return total


def _bytes_of(value: Value) -> bytes:
    if isinstance(value, Blob):
        return value.data
    if isinstance(value, TupleValue):
        return b"".join(_bytes_of(v) for v in value.items)
    return json.dumps(to_json(value)).encode("utf-8")


def respond(spec: TestServiceSpec, args: list[Value], rng: random.Random | None = None) -> Blob:
    data = b"".join(_bytes_of(v) for v in args)
    size = output_size(spec.behavior, [len(data)], rng, spec.jitter)
    if size <= len(data):
        return Blob(data[:size])
    reps = -(-size // max(len(data), 1))
    return Blob(((data or b"\0") * reps)[:size])


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    server: _Server

    def log_message(self, fmt: str, *args) -> None:
        log.debug(fmt, *args)

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802
        if self.path == "/healthz":
            self._reply(200, {"status": "ok", "service": self.server.spec.name})
        else:
            self._reply(404, {"error": {"code": "NotFound", "message": self.path}})

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        if not re.match(r"^/invoke/[^/]+$", self.path):
            self._reply(404, {"error": {"code": "NotFound", "message": self.path}})
            return
        try:
            doc = json.loads(raw)
            args = [from_json(v) for v in doc["args"].values()]
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            self._reply(400, {"error": {"code": "FormatError", "message": str(exc)}})
            return
        spec = self.server.spec
        time.sleep(spec.compute_delay_ms / 1000.0)
        with self.server.lock:
            value = respond(spec, args, self.server.rng)
            self.server.calls += 1
        self._reply(200, {"value": to_json(value)})


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, spec: TestServiceSpec, seed: int) -> None:
        self.spec = spec
        self.rng = random.Random(seed)
        self.lock = threading.Lock()
        self.calls = 0
        super().__init__((spec.host, spec.port), _Handler)


class TestService:
    """A running test service; use as a context manager or call ``stop``."""

    __test__ = False

    def __init__(self, server: _Server) -> None:
        self._server = server
        self.spec = server.spec
        self.host, self.port = server.server_address[:2]
        self._thread = threading.Thread(
            target=server.serve_forever, kwargs={"poll_interval": 0.05}, name=f"svc-{self.spec.name}", daemon=True
        )

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def calls(self) -> int:
        return self._server.calls

    def start(self) -> TestService:
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> TestService:
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def run_test_service(spec: TestServiceSpec, seed: int = 0, background: bool = True) -> TestService:
    """Bind and (by default) start serving ``POST /invoke/{op}`` for ``spec``."""
    try:
        server = _Server(spec, seed)
    except OSError as exc:
        raise BindError(f"cannot bind {spec.host}:{spec.port}: {exc}") from exc
    svc = TestService(server)
    return svc.start() if background else svc


class LocalServiceInvoker:
    """In-process stand-in for a set of test services, keyed by endpoint."""

    def __init__(self, specs: dict[str, TestServiceSpec], seed: int = 0, sleep: bool = False) -> None:
        self.specs = dict(specs)
        self.rng = random.Random(seed)
        self.sleep = sleep
        self._lock = threading.Lock()

    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        spec = self.specs[endpoint]
        if self.sleep:
            time.sleep(spec.compute_delay_ms / 1000.0)
        with self._lock:
            return respond(spec, [v for _, v in args], self.rng)

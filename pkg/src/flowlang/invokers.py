"""Invoker implementations: deterministic mocks and the HTTP client."""

from __future__ import annotations

import hashlib
import threading
import zlib
from typing import Iterable, Mapping, Protocol

import httpx

from .catalog import OperationSig, ServiceCatalog
from .errors import InvokeTimeout, ServiceError
from .typesys import BaseType, ComplexType
from .values import Blob, Record, Scalar, TupleValue, Value, from_json, payload_size, show, to_json


class Transport(Protocol):
    """Hook around every message a site sends or receives."""

    def outbound(self, url: str, nbytes: int) -> None: ...

    def inbound(self, url: str, nbytes: int) -> None: ...


class DirectTransport:
    def outbound(self, url: str, nbytes: int) -> None:
        pass

    def inbound(self, url: str, nbytes: int) -> None:
        pass


def _mock_value(sig: OperationSig | None, text: str) -> Value:
    out = sig.output if sig is not None else BaseType("string")
    if isinstance(out, ComplexType):
        return Record(out, ())
    name = out.name
    digest = zlib.crc32(text.encode("utf-8"))
    if name in ("int", "long"):
        return Scalar(name, digest & 0x7FFFFFFF)
    if name == "short":
        return Scalar(name, digest & 0x7FFF)
    if name == "byte":
        return Scalar(name, digest & 0x7F)
    if name in ("double", "float", "decimal"):
        return Scalar(name, (digest % 100000) / 100.0)
    if name == "boolean":
        return Scalar(name, digest % 2 == 0)
    return Scalar("string", text)


_MAX_ECHO = 160


def _plain(value: Value) -> str:
    if isinstance(value, Scalar) and value.type == "string":
        return value.value
    if isinstance(value, TupleValue):
        return "(" + ", ".join(_plain(v) for v in value.items) + ")"
    return show(value)


class EchoInvoker:
    """Returns ``"Op(arg, ...)"`` for string results, a hash of it otherwise.

    Output types come from the registered catalogs so results always respect
    the operation signature.  Thread-safe.
    """

    def __init__(self, signatures: Mapping[tuple[str, str], OperationSig] | None = None) -> None:
        self._sigs: dict[tuple[str, str], OperationSig] = dict(signatures or {})
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_catalogs(cls, catalogs: Iterable[ServiceCatalog]) -> EchoInvoker:
        inv = cls()
        for cat in catalogs:
            inv.register(cat)
        return inv

    def register(self, catalog: ServiceCatalog) -> None:
        with self._lock:
            for svc in catalog.services:
                for port in svc.ports:
                    for op in port.operations:
                        self._sigs[(port.endpoint, op.name)] = op

    def learn(self, endpoint: str, sig: OperationSig) -> None:
        """Record one signature, e.g. from a deployed fragment."""
        with self._lock:
            self._sigs.setdefault((endpoint, sig.name), sig)

    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        with self._lock:
            sig = self._sigs.get((endpoint, operation))
            self.calls.append((endpoint, operation))
        text = f"{operation}(" + ", ".join(_plain(v) for _, v in args) + ")"
        if len(text) > _MAX_ECHO:
            text = f"{operation}#" + hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]
        return _mock_value(sig, text)


class DoublingInvoker:
    """Every operation returns a blob twice the size of its input payload."""

    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        data = b"".join(v.data if isinstance(v, Blob) else show(v).encode() for _, v in args)
        return Blob(data + data)


class FailingInvoker:
    """Delegates to ``inner`` except for the named operations, which raise."""

    def __init__(self, inner, failing: set[str]) -> None:
        self.inner = inner
        self.failing = set(failing)

    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        if operation in self.failing:
            raise ServiceError(500, f"{operation} is broken")
        return self.inner.invoke(endpoint, operation, args)


class HttpInvoker:
    """Calls ``POST {endpoint}/invoke/{op}`` with ``{"args": {...}}``."""

    def __init__(self, timeout: float = 30.0, transport: Transport | None = None) -> None:
        self.timeout = timeout
        self.transport = transport or DirectTransport()
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        url = f"{endpoint.rstrip('/')}/invoke/{operation}"
        self.transport.outbound(url, sum(payload_size(v) for _, v in args))
        body = {"args": {name: to_json(v) for name, v in args}}
        try:
            resp = self._client.post(url, json=body)
        except httpx.TimeoutException as exc:
            raise InvokeTimeout(f"{url}: no answer within {self.timeout} s") from exc
        except httpx.HTTPError as exc:
            raise InvokeTimeout(f"{url}: {exc}") from exc
        if resp.status_code != 200:
            raise ServiceError(resp.status_code, resp.text)
        value = from_json(resp.json()["value"])
        self.transport.inbound(url, payload_size(value))
        return value

"""The proxy co-located with each orchestrator.

It performs service invocations on the orchestrator's behalf and keeps the
intermediate values that arrive from peers.  Its counters are kept apart
from the orchestrator's so proxy traffic can be measured on its own.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field

from ..engine import Invoker
from ..values import Value, payload_size


@dataclass
class ProxyCounters:
    invocations: list[tuple[str, str]] = field(default_factory=list)
    bytes_to_services: int = 0
    bytes_from_services: int = 0
    stored_values: int = 0
    stored_bytes: int = 0

    def to_json(self) -> dict:
        return {
            "invocations": [list(i) for i in self.invocations],
            "bytes_to_services": self.bytes_to_services,
            "bytes_from_services": self.bytes_from_services,
            "stored_values": self.stored_values,
            "stored_bytes": self.stored_bytes,
        }


class ProxyStore:
    """Write-once map ``(run, edge) -> value``; the first write wins."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._data: dict[str, dict[int, Value]] = defaultdict(dict)

    def put(self, run: str, edge: int, value: Value) -> bool:
        with self._lock:
            slot = self._data[run]
            if edge in slot:
                return False
            slot[edge] = value
            return True

    def get(self, run: str, edge: int) -> Value:
        with self._lock:
            return self._data[run][edge]

    def __contains__(self, key: tuple[str, int]) -> bool:
        run, edge = key
        with self._lock:
            return edge in self._data.get(run, {})

    def drop(self, run: str) -> None:
        with self._lock:
            self._data.pop(run, None)


class Proxy:
    def __init__(self, site: str, invoker: Invoker) -> None:
        self.site = site
        self.invoker = invoker
        self.store = ProxyStore()
        self._lock = threading.Lock()
        self._counters: dict[str, ProxyCounters] = defaultdict(ProxyCounters)

    def invoke(self, run: str, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value:
        sent = sum(payload_size(v) for _, v in args)
        with self._lock:
            c = self._counters[run]
            c.invocations.append((endpoint, operation))
            c.bytes_to_services += sent
        value = self.invoker.invoke(endpoint, operation, args)
        with self._lock:
            self._counters[run].bytes_from_services += payload_size(value)
        return value

    def keep(self, run: str, edge: int, value: Value) -> bool:
        """Store a value received from a peer; False if it was already there."""
        fresh = self.store.put(run, edge, value)
        if fresh:
            with self._lock:
                c = self._counters[run]
                c.stored_values += 1
                c.stored_bytes += payload_size(value)
        return fresh

    def counters(self, run: str) -> ProxyCounters:
        with self._lock:
            return self._counters[run]

    def drop(self, run: str) -> None:
        self.store.drop(run)
        with self._lock:
            self._counters.pop(run, None)

"""Link model for inter-site traffic.

Every message between two different sites costs ``latency + bytes /
bandwidth``; traffic inside a site is free.  :class:`VirtualNetwork` applies
the model on a virtual clock with FIFO links, :class:`ShapedTransport`
applies it to real sockets by sleeping.
"""

from __future__ import annotations

import json
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..errors import FormatError

MB = 1_000_000


@dataclass(frozen=True)
class Link:
    latency_ms: float = 20.0
    bandwidth: float = 10 * MB  # bytes per second

    def __post_init__(self) -> None:
        if self.latency_ms < 0 or self.bandwidth <= 0:
            raise FormatError("$.link", "latency must be >= 0 and bandwidth > 0")

    def serialization_ms(self, nbytes: int) -> float:
        return nbytes * 1000.0 / self.bandwidth

    def transfer_ms(self, nbytes: int) -> float:
        return self.latency_ms + self.serialization_ms(nbytes)


@dataclass(frozen=True)
class NetModel:
    """Per ordered site pair link parameters, with a default for unlisted pairs."""

    default: Link = field(default_factory=Link)
    links: dict[tuple[str, str], Link] = field(default_factory=dict)

    def link(self, src: str, dst: str) -> Link | None:
        if src == dst:
            return None
        return self.links.get((src, dst), self.default)

    def transfer_time(self, src: str, dst: str, nbytes: int) -> float:
        """Milliseconds to move ``nbytes`` from ``src`` to ``dst`` over an idle link."""
        link = self.link(src, dst)
        return 0.0 if link is None else link.transfer_ms(nbytes)

    def with_bandwidth(self, bandwidth: float) -> NetModel:
        return NetModel(
            Link(self.default.latency_ms, bandwidth),
            {k: Link(v.latency_ms, bandwidth) for k, v in self.links.items()},
        )

    def to_json(self) -> dict:
        return {
            "default": {"latency_ms": self.default.latency_ms, "bandwidth": self.default.bandwidth},
            "links": [
                {"src": s, "dst": d, "latency_ms": l.latency_ms, "bandwidth": l.bandwidth}
                for (s, d), l in sorted(self.links.items())
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> NetModel:
        try:
            d = doc.get("default", {})
            default = Link(float(d.get("latency_ms", 20.0)), float(d.get("bandwidth", 10 * MB)))
            links = {
                (l["src"], l["dst"]): Link(float(l["latency_ms"]), float(l["bandwidth"]))
                for l in doc.get("links", [])
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("$.net", str(exc)) from exc
        return cls(default, links)

    @classmethod
    def load(cls, path: str | Path) -> NetModel:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class VirtualNetwork:
    """FIFO links on a virtual clock; a link serializes one message at a time."""

    def __init__(self, net: NetModel) -> None:
        self.net = net
        self._busy: dict[tuple[str, str], float] = {}
        self.link_bytes: Counter[tuple[str, str]] = Counter()
        self.messages: Counter[tuple[str, str]] = Counter()

    def send(self, now: float, src: str, dst: str, nbytes: int) -> float:
        """Queue a message at time ``now``; returns its arrival time."""
        link = self.net.link(src, dst)
        if link is None:
            return now
        key = (src, dst)
        start = max(now, self._busy.get(key, 0.0))
        done = start + link.serialization_ms(nbytes)
        self._busy[key] = done
        self.link_bytes[key] += nbytes
        self.messages[key] += 1
        return done + link.latency_ms


class ShapedTransport:
    """Real-socket shaping: sleeps for the modelled time and counts bytes.

    ``site_of`` maps a destination URL to its site; unknown URLs are treated
    as local.
    """

    def __init__(
        self,
        net: NetModel,
        site: str,
        site_of: Callable[[str], str | None],
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.net = net
        self.site = site
        self.site_of = site_of
        self.sleep = sleep
        self._lock = threading.Lock()
        self.link_bytes: Counter[tuple[str, str]] = Counter()

    def _move(self, src: str, dst: str, nbytes: int) -> None:
        if src == dst:
            return
        with self._lock:
            self.link_bytes[(src, dst)] += nbytes
        self.sleep(self.net.transfer_time(src, dst, nbytes) / 1000.0)

    def outbound(self, url: str, nbytes: int) -> None:
        self._move(self.site, self.site_of(url) or self.site, nbytes)

    def inbound(self, url: str, nbytes: int) -> None:
        self._move(self.site_of(url) or self.site, self.site, nbytes)

    def reset(self) -> None:
        with self._lock:
            self.link_bytes.clear()

"""Centralized versus decentralized runs of the benchmark patterns."""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from ..compiler import compile_source
from ..errors import FlowError, FormatError
from ..partitioner import Placement, partition
from ..values import Blob
from .network import NetModel
from .services import DEFAULT_COMPUTE_DELAY_MS, TestServiceSpec
from .simulate import simulate
from .workflows import (
    PIPELINE,
    ROOT,
    SOURCES,
    Topology,
    check_pattern,
    default_services,
    resolver_for,
    service_site,
    virtual_endpoint,
)

log = logging.getLogger(__name__)

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"
MODES = (CENTRALIZED, DECENTRALIZED)
VIRTUAL = "virtual"
REAL = "real"


@dataclass
class ExperimentConfig:
    """Fixture parameters; everything the paper leaves unreported lives here."""

    pattern: str = PIPELINE
    modes: tuple[str, ...] = MODES
    input_bytes: int = 256 * 1024
    repetitions: int = 20
    net: NetModel = field(default_factory=NetModel)
    compute_delay_ms: float = DEFAULT_COMPUTE_DELAY_MS
    services: list[TestServiceSpec] | None = None
    placement: Placement | None = None
    clock: str = VIRTUAL
    seed: int = 0

    def __post_init__(self) -> None:
        check_pattern(self.pattern)
        for m in self.modes:
            if m not in MODES:
                raise FormatError("$.modes", f"unknown mode {m!r}")
        if self.clock not in (VIRTUAL, REAL):
            raise FormatError("$.clock", f"unknown clock {self.clock!r}")
        if self.input_bytes < 0 or self.repetitions < 0:
            raise FormatError("$", "input_bytes and repetitions must be >= 0")

    def service_specs(self) -> list[TestServiceSpec]:
        return list(self.services) if self.services else default_services(self.pattern, self.compute_delay_ms)

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern,
            "modes": list(self.modes),
            "input_bytes": self.input_bytes,
            "repetitions": self.repetitions,
            "net": self.net.to_json(),
            "compute_delay_ms": self.compute_delay_ms,
            "services": [s.to_json() for s in self.service_specs()],
            "placement": self.placement.to_json() if self.placement else None,
            "clock": self.clock,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> ExperimentConfig:
        try:
            return cls(
                pattern=doc.get("pattern", PIPELINE),
                modes=tuple(doc.get("modes", MODES)),
                input_bytes=int(doc.get("input_bytes", 256 * 1024)),
                repetitions=int(doc.get("repetitions", 20)),
                net=NetModel.from_json(doc["net"]) if doc.get("net") else NetModel(),
                compute_delay_ms=float(doc.get("compute_delay_ms", DEFAULT_COMPUTE_DELAY_MS)),
                services=[TestServiceSpec.from_json(s) for s in doc["services"]] if doc.get("services") else None,
                placement=Placement.from_json(doc["placement"]) if doc.get("placement") else None,
                clock=doc.get("clock", VIRTUAL),
                seed=int(doc.get("seed", 0)),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise FormatError("$", f"malformed experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Repetition:
    pattern: str
    mode: str
    repetition: int
    makespan_ms: float
    bytes_total: int
    bytes_through_root: int
    link_bytes: dict[str, int] = field(default_factory=dict)


@dataclass
class MetricsReport:
    rows: list[Repetition] = field(default_factory=list)
    valid: bool = True
    error: str | None = None

    def patterns(self) -> list[str]:
        return list(dict.fromkeys(r.pattern for r in self.rows))

    def modes(self, pattern: str) -> list[str]:
        return [m for m in MODES if any(r.pattern == pattern and r.mode == m for r in self.rows)]

    def makespans(self, pattern: str, mode: str) -> list[float]:
        return [r.makespan_ms for r in self.rows if r.pattern == pattern and r.mode == mode]

    def mean(self, pattern: str, mode: str) -> float | None:
        xs = self.makespans(pattern, mode)
        return statistics.fmean(xs) if xs else None

    def std(self, pattern: str, mode: str) -> float | None:
        xs = self.makespans(pattern, mode)
        if not xs:
            return None
        return statistics.stdev(xs) if len(xs) > 1 else 0.0

    def root_bytes(self, pattern: str, mode: str) -> float | None:
        xs = [r.bytes_through_root for r in self.rows if r.pattern == pattern and r.mode == mode]
        return statistics.fmean(xs) if xs else None

    def speedup(self, pattern: str) -> float | None:
        """Mean centralized makespan over mean decentralized makespan."""
        c, d = self.mean(pattern, CENTRALIZED), self.mean(pattern, DECENTRALIZED)
        if c is None or d is None or d == 0:
            return None
        return c / d

    def extend(self, other: MetricsReport) -> MetricsReport:
        return MetricsReport(self.rows + other.rows, self.valid and other.valid, self.error or other.error)


def _link_key(src: str, dst: str) -> str:
    return f"{src}->{dst}"


def _root_bytes(link_bytes: dict[tuple[str, str], int], root: str) -> int:
    return sum(n for (s, d), n in link_bytes.items() if root in (s, d))


def run_experiment(
    pattern: str | None = None,
    modes: str | Sequence[str] | None = None,
    config: ExperimentConfig | None = None,
    **overrides,
) -> MetricsReport:
    """Run ``config.repetitions`` repetitions of ``pattern`` in each mode."""
    config = config or ExperimentConfig()
    if pattern is not None:
        overrides["pattern"] = pattern
    if modes is not None:
        overrides["modes"] = (modes,) if isinstance(modes, str) else tuple(modes)
    if overrides:
        config = replace(config, **overrides)
    runner = _run_virtual if config.clock == VIRTUAL else _run_real
    report = MetricsReport()
    for mode in config.modes:
        try:
            report.rows.extend(runner(config, mode))
        except (FlowError, RuntimeError, OSError) as exc:
            log.error("%s/%s aborted: %s", config.pattern, mode, exc)
            report.valid = False
            report.error = f"{config.pattern}/{mode}: {exc}"
            break
    return report


def _run_virtual(config: ExperimentConfig, mode: str) -> Iterable[Repetition]:
    specs = config.service_specs()
    endpoints = [virtual_endpoint(i) for i in range(1, len(specs) + 1)]
    compiled = compile_source(SOURCES[config.pattern], resolver=resolver_for(config.pattern, endpoints))
    services = dict(zip(endpoints, specs))
    site_of = {url: service_site(i) for i, url in enumerate(endpoints, start=1)}
    topo = Topology()
    placement = topo.centralized() if mode == CENTRALIZED else (config.placement or topo.decentralized())
    fragments = partition(compiled.graph, placement)
    inputs = {v: config.input_bytes for v in compiled.graph.input_vars}
    for rep in range(config.repetitions):
        rng = random.Random(config.seed * 1_000_003 + rep)
        res = simulate(compiled.graph, fragments, inputs, services, site_of.__getitem__, config.net, rng)
        yield Repetition(
            config.pattern,
            mode,
            rep,
            res.makespan_ms,
            res.bytes_total,
            _root_bytes(res.link_bytes, placement.root),
            {_link_key(s, d): n for (s, d), n in sorted(res.link_bytes.items())},
        )


def _run_real(config: ExperimentConfig, mode: str) -> Iterable[Repetition]:
    """Live sockets: test services and orchestrators on loopback, links shaped by sleeping."""
    from ..invokers import HttpInvoker
    from ..orchestrator import Orchestrator, OrchestratorServer
    from .network import ShapedTransport
    from .services import run_test_service

    specs = config.service_specs()
    services = [run_test_service(s, seed=config.seed) for s in specs]
    site_by_url = {svc.url: service_site(i) for i, svc in enumerate(services, start=1)}
    sites = [ROOT] if mode == CENTRALIZED else [ROOT] + [service_site(i) for i in range(1, len(specs) + 1)]
    transports: list[ShapedTransport] = []
    servers: dict[str, OrchestratorServer] = {}

    def site_of(url: str) -> str | None:
        for prefix, site in site_by_url.items():
            if url.startswith(prefix):
                return site
        return None

    try:
        for site in sites:
            shaped = ShapedTransport(config.net, site, site_of)
            transports.append(shaped)
            orch = Orchestrator(site, HttpInvoker(transport=shaped), transport=shaped)
            servers[site] = OrchestratorServer(orch).start()
            site_by_url[servers[site].url] = site
        endpoints = [svc.url for svc in services]
        urls = tuple(servers[service_site(i)].url if service_site(i) in servers else "" for i in range(1, 5))
        topo = Topology(servers[ROOT].url, urls)
        placement = topo.centralized() if mode == CENTRALIZED else (config.placement or topo.decentralized())
        documents = resolver_for(config.pattern, endpoints).documents
        root = servers[ROOT].orchestrator
        for rep in range(config.repetitions):
            for t in transports:
                t.reset()
            start = time.monotonic()
            run = root.submit(SOURCES[config.pattern], {"a": Blob(bytes(config.input_bytes))}, placement, mode, documents)
            status, _ = root.outputs(run, wait=120.0)
            if status != "done":
                raise RuntimeError(f"repetition {rep} did not finish")
            elapsed = (time.monotonic() - start) * 1000.0
            links: dict[tuple[str, str], int] = {}
            for t in transports:
                for k, n in t.link_bytes.items():
                    links[k] = links.get(k, 0) + n
            yield Repetition(
                config.pattern,
                mode,
                rep,
                elapsed,
                sum(links.values()),
                _root_bytes(links, ROOT),
                {_link_key(s, d): n for (s, d), n in sorted(links.items())},
            )
    finally:
        for srv in servers.values():
            srv.stop()
        for svc in services:
            svc.stop()

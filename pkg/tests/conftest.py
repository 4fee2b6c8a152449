from __future__ import annotations

import contextlib
from dataclasses import dataclass

import pytest

from flowlang import corpus
from flowlang.compiler import compile_source
from flowlang.invokers import EchoInvoker
from flowlang.orchestrator import Orchestrator, OrchestratorServer
from flowlang.partitioner import Placement, Site


@pytest.fixture(scope="session")
def resolver():
    return corpus.resolver()


@pytest.fixture(scope="session")
def listing1(resolver):
    return compile_source(corpus.source("listing1"), resolver=resolver)


def echo_for(compiled) -> EchoInvoker:
    """Echo invoker that knows every signature the workflow uses."""
    r = compiled.resolved
    return EchoInvoker({(r.ports[port].endpoint, op): sig for (port, op), sig in r.signatures.items()})


@dataclass
class Cluster:
    orchestrators: dict[str, Orchestrator]
    servers: dict[str, OrchestratorServer]

    @property
    def urls(self) -> dict[str, str]:
        return {s: srv.url for s, srv in self.servers.items()}

    def placement(self, root: str, ports: dict[str, str]) -> Placement:
        return Placement(root, tuple(Site(s, u) for s, u in self.urls.items()), ports)


@contextlib.contextmanager
def start_cluster(sites, invoker_for, **kwargs):
    """One loopback orchestrator per site; ``invoker_for(site)`` supplies its invoker."""
    orchs: dict[str, Orchestrator] = {}
    servers: dict[str, OrchestratorServer] = {}
    try:
        for site in sites:
            orch = Orchestrator(site, invoker_for(site), **kwargs)
            orchs[site] = orch
            servers[site] = OrchestratorServer(orch).start()
        yield Cluster(orchs, servers)
    finally:
        for srv in servers.values():
            srv.stop()  # also closes its orchestrator

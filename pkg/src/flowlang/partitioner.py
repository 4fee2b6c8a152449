"""Split a dataflow graph into per-site fragments.

Each invocation runs at the site its port is placed on; inputs, constants
and outputs stay at the root site; a tuple assembly follows its single
consuming invocation (or stays at the root).  Edges that cross sites become
transfers, one per (producer node, destination site): the receiving site
fans the value out to every local consumer.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .dag import CONST, INPUT, INVOCATION, OUTPUT, TUPLE, DataflowGraph, Edge, Node, Slot, check_acyclic
from .dag import edge_from_json, edge_to_json, node_from_json, node_to_json
from .engine import DEFAULT_TIMEOUT, Invoker, run_to_completion
from .errors import FormatError, ReassemblyMismatch, UnknownSiteForPort
from .typesys import TypeExpr, type_from_json, type_to_json
from .values import Value


@dataclass(frozen=True)
class Site:
    id: str
    url: str = ""


@dataclass(frozen=True)
class Placement:
    root: str
    sites: tuple[Site, ...]
    ports: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [s.id for s in self.sites]
        if self.root not in ids:
            raise FormatError("$.root", f"root site {self.root!r} is not declared")
        if len(set(ids)) != len(ids):
            raise FormatError("$.sites", "duplicate site id")

    @classmethod
    def single(cls, site: str = "A", url: str = "") -> Placement:
        return cls(site, (Site(site, url),), {})

    def site_of_port(self, port: str) -> str:
        site = self.ports.get(port, self.root)
        if site not in self.site_ids:
            raise UnknownSiteForPort(port, site)
        return site

    @property
    def site_ids(self) -> list[str]:
        return [s.id for s in self.sites]

    def url(self, site: str) -> str:
        for s in self.sites:
            if s.id == site:
                return s.url
        raise KeyError(site)

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "sites": [{"id": s.id, "url": s.url} for s in self.sites],
            "ports": dict(self.ports),
        }

    @classmethod
    def from_json(cls, doc: dict) -> Placement:
        try:
            sites = tuple(Site(s["id"], s.get("url", "")) for s in doc["sites"])
            return cls(doc["root"], sites, dict(doc.get("ports", {})))
        except (KeyError, TypeError) as exc:
            raise FormatError("$", f"malformed placement: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> Placement:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Inbound:
    """A cut edge as seen by its receiving fragment."""

    edge: int
    dst: int
    param: Slot
    slot: int | None
    via: int
    type: TypeExpr


@dataclass(frozen=True)
class Transfer:
    """One wire copy of a node's value to another site.

    ``edge`` (the lowest covered cut-edge id) names the transfer; tokens for
    it are keyed by ``(run, edge)``.
    """

    edge: int
    src: int
    to_site: str
    to_url: str
    edges: tuple[int, ...]


@dataclass(frozen=True)
class Fragment:
    fragment_id: str
    site: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    inbound: tuple[Inbound, ...] = ()
    outbound: tuple[Transfer, ...] = ()
    output_returns: tuple[int, ...] = ()
    root_site: str = ""
    root_url: str = ""

    def graph(self) -> DataflowGraph:
        return DataflowGraph(self.nodes, self.edges)

    def transfers_from(self, node_id: int) -> list[Transfer]:
        return [t for t in self.outbound if t.src == node_id]

    def inbound_via(self, transfer: int) -> list[Inbound]:
        return [i for i in self.inbound if i.via == transfer]

    def to_json(self) -> dict:
        return {
            "fragment_id": self.fragment_id,
            "site": self.site,
            "root_site": self.root_site,
            "root_url": self.root_url,
            "nodes": [node_to_json(n) for n in self.nodes],
            "edges": [edge_to_json(e) for e in self.edges],
            "inbound": [
                {"edge": i.edge, "dst": i.dst, "param": i.param, "slot": i.slot, "via": i.via, "type": type_to_json(i.type)}
                for i in self.inbound
            ],
            "outbound": [
                {"edge": t.edge, "src": t.src, "to_site": t.to_site, "to_url": t.to_url, "edges": list(t.edges)}
                for t in self.outbound
            ],
            "output_returns": list(self.output_returns),
        }

    @classmethod
    def from_json(cls, doc: dict) -> Fragment:
        try:
            return cls(
                fragment_id=doc["fragment_id"],
                site=doc["site"],
                nodes=tuple(node_from_json(n) for n in doc["nodes"]),
                edges=tuple(edge_from_json(e) for e in doc["edges"]),
                inbound=tuple(
                    Inbound(i["edge"], i["dst"], i["param"], i["slot"], i["via"], type_from_json(i["type"]))
                    for i in doc["inbound"]
                ),
                outbound=tuple(
                    Transfer(t["edge"], t["src"], t["to_site"], t.get("to_url", ""), tuple(t["edges"]))
                    for t in doc["outbound"]
                ),
                output_returns=tuple(doc.get("output_returns", ())),
                root_site=doc.get("root_site", ""),
                root_url=doc.get("root_url", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("$", f"malformed fragment: {exc}") from exc


def assign_sites(graph: DataflowGraph, placement: Placement) -> dict[int, str]:
    site: dict[int, str] = {}
    for n in graph.nodes:
        if n.kind == INVOCATION:
            site[n.id] = placement.site_of_port(n.port)
    for n in graph.nodes:
        if n.kind == TUPLE:
            consumers = {e.dst for e in graph.out_edges(n.id) if graph.node(e.dst).kind == INVOCATION}
            site[n.id] = site[consumers.pop()] if len(consumers) == 1 else placement.root
        elif n.kind in (INPUT, CONST, OUTPUT):
            site[n.id] = placement.root
    return site


def partition(graph: DataflowGraph, placement: Placement) -> list[Fragment]:
    """Split ``graph`` into one fragment per site that hosts at least one node."""
    site = assign_sites(graph, placement)
    local: dict[str, list[Edge]] = defaultdict(list)
    groups: dict[tuple[int, str], list[Edge]] = defaultdict(list)
    for e in graph.edges:
        if site[e.src] == site[e.dst]:
            local[site[e.src]].append(e)
        else:
            groups[(e.src, site[e.dst])].append(e)

    outbound: dict[str, list[Transfer]] = defaultdict(list)
    inbound: dict[str, list[Inbound]] = defaultdict(list)
    returns: dict[str, list[int]] = defaultdict(list)
    for (src, dst_site), edges in sorted(groups.items(), key=lambda kv: min(e.id for e in kv[1])):
        tid = min(e.id for e in edges)
        outbound[site[src]].append(
            Transfer(tid, src, dst_site, placement.url(dst_site), tuple(e.id for e in edges))
        )
        for e in edges:
            inbound[dst_site].append(Inbound(e.id, e.dst, e.dst_param, e.src_slot, tid, e.type))
            if graph.node(e.dst).kind == OUTPUT:
                returns[site[src]].append(e.id)

    root_url = placement.url(placement.root)
    fragments = []
    for s in placement.site_ids:
        nodes = tuple(n for n in graph.nodes if site[n.id] == s)
        if not nodes:
            continue
        fragments.append(
            Fragment(
                fragment_id=f"frag-{s}",
                site=s,
                nodes=nodes,
                edges=tuple(local[s]),
                inbound=tuple(inbound[s]),
                outbound=tuple(outbound[s]),
                output_returns=tuple(returns[s]),
                root_site=placement.root,
                root_url=root_url,
            )
        )
    return fragments


def reassemble(fragments: list[Fragment]) -> DataflowGraph:
    """Rebuild the original graph from its fragments, checking cut-edge bookkeeping."""
    nodes: dict[int, Node] = {}
    for frag in fragments:
        for n in frag.nodes:
            if n.id in nodes:
                raise ReassemblyMismatch(f"node {n.id} appears in more than one fragment")
            nodes[n.id] = n
    home = {n.id: frag.site for frag in fragments for n in frag.nodes}

    transfers: dict[int, tuple[Fragment, Transfer]] = {}
    for frag in fragments:
        for t in frag.outbound:
            if t.edge in transfers:
                raise ReassemblyMismatch(f"transfer {t.edge} announced twice")
            if home.get(t.src) != frag.site:
                raise ReassemblyMismatch(f"transfer {t.edge} leaves a node not in fragment {frag.fragment_id}")
            transfers[t.edge] = (frag, t)

    edges: dict[int, Edge] = {}
    for frag in fragments:
        for e in frag.edges:
            if home.get(e.src) != frag.site or home.get(e.dst) != frag.site:
                raise ReassemblyMismatch(f"local edge {e.id} of {frag.fragment_id} leaves the fragment")
            edges[e.id] = e
    received: dict[int, set[int]] = defaultdict(set)
    for frag in fragments:
        for i in frag.inbound:
            if i.via not in transfers:
                raise ReassemblyMismatch(f"inbound edge {i.edge} arrives via unknown transfer {i.via}")
            _, t = transfers[i.via]
            if t.to_site != frag.site or home.get(i.dst) != frag.site:
                raise ReassemblyMismatch(f"inbound edge {i.edge} delivered to the wrong site")
            if i.edge in edges:
                raise ReassemblyMismatch(f"edge {i.edge} is both local and cut")
            edges[i.edge] = Edge(i.edge, t.src, i.slot, i.dst, i.param, i.type)
            received[i.via].add(i.edge)
    for tid, (_, t) in transfers.items():
        if set(t.edges) != received[tid]:
            raise ReassemblyMismatch(f"transfer {tid} covers edges {sorted(t.edges)}, receivers saw {sorted(received[tid])}")

    graph = DataflowGraph(
        tuple(nodes[k] for k in sorted(nodes)), tuple(edges[k] for k in sorted(edges))
    )
    check_acyclic(graph)
    return graph


def merge_execute_oracle(
    fragments: list[Fragment],
    inputs: Mapping[str, Value],
    invoker: Invoker,
    workers: int = 1,
    timeout: float = DEFAULT_TIMEOUT,
) -> dict[str, Value]:
    """Reassemble the fragments and run the result on the local engine."""
    return run_to_completion(reassemble(fragments), inputs, invoker, workers=workers, timeout=timeout)

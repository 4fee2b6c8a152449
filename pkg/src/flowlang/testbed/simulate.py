"""Discrete-event execution of a partitioned workflow on a virtual clock.

Values are represented by their sizes only.  The simulation walks the same
graph and fragments the orchestrators execute: each node runs at its
fragment's site, each invocation ships its arguments to the service's site
and its result back, and each cut-edge transfer crosses the network once.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

from ..dag import CONST, INPUT, INVOCATION, OUTPUT, TUPLE, DataflowGraph, Slot
from ..partitioner import Fragment
from ..values import payload_size
from .network import NetModel, VirtualNetwork
from .services import TestServiceSpec, output_size

SizeVal = Union[int, tuple]  # a size or a tuple of sizes


def size_of(v: SizeVal) -> int:
    return sum(size_of(x) for x in v) if isinstance(v, tuple) else v


@dataclass
class SimResult:
    makespan_ms: float
    link_bytes: dict[tuple[str, str], int]
    outputs: dict[str, SizeVal]
    node_done_ms: dict[int, float] = field(default_factory=dict)

    @property
    def bytes_total(self) -> int:
        return sum(self.link_bytes.values())

    def bytes_through(self, site: str) -> int:
        return sum(n for (s, d), n in self.link_bytes.items() if site in (s, d))


def simulate(
    graph: DataflowGraph,
    fragments: list[Fragment],
    inputs: Mapping[str, SizeVal],
    services: Mapping[str, TestServiceSpec],
    service_site: Callable[[str], str],
    net: NetModel,
    rng: random.Random | None = None,
) -> SimResult:
    """Run to completion; ``services`` maps endpoints to their specs."""
    home = {n.id: f.site for f in fragments for n in f.nodes}
    transfers = {t.src: [] for f in fragments for t in f.outbound}
    for f in fragments:
        for t in f.outbound:
            transfers[t.src].append(t)
    inbound = {i.edge: i for f in fragments for i in f.inbound}
    vnet = VirtualNetwork(net)
    events: list = []
    seq = itertools.count()
    slots: dict[int, dict[Slot, SizeVal]] = {n.id: {} for n in graph.nodes}
    outputs: dict[str, SizeVal] = {}
    done_at: dict[int, float] = {}
    makespan = 0.0

    def at(t: float, fn: Callable[[float], None]) -> None:
        heapq.heappush(events, (t, next(seq), fn))

    def pick(v: SizeVal, slot: int | None) -> SizeVal:
        return v if slot is None else v[slot]

    def complete(nid: int, v: SizeVal, t: float) -> None:
        done_at[nid] = t
        for e in graph.out_edges(nid):
            if e.id not in inbound:
                fill(e.dst, e.dst_param, pick(v, e.src_slot), t)
        for tr in transfers.get(nid, []):
            arrive = vnet.send(t, home[nid], tr.to_site, size_of(v))

            def land(t2: float, tr=tr, v=v) -> None:
                for eid in tr.edges:
                    i = inbound[eid]
                    fill(i.dst, i.param, pick(v, i.slot), t2)

            at(arrive, land)

    def fill(nid: int, slot: Slot, v: SizeVal, t: float) -> None:
        nonlocal makespan
        node = graph.node(nid)
        slots[nid][slot] = v
        if node.kind == OUTPUT:
            outputs[node.var] = v
            makespan = max(makespan, t)
            return
        if len(slots[nid]) < len(node.slots):
            return
        args = [slots[nid][s] for s in node.slots]
        if node.kind == TUPLE:
            complete(nid, tuple(args), t)
        else:
            invoke(nid, args, t)

    def invoke(nid: int, args: list[SizeVal], t: float) -> None:
        node = graph.node(nid)
        spec = services[node.endpoint]
        here, there = home[nid], service_site(node.endpoint)
        sizes = [size_of(a) for a in args]
        reached = vnet.send(t, here, there, sum(sizes))

        def compute(t2: float) -> None:
            out = output_size(spec.behavior, sizes, rng, spec.jitter)
            back = vnet.send(t2, there, here, out)
            at(back, lambda t3: complete(nid, out, t3))

        at(reached + spec.compute_delay_ms, compute)

    for n in graph.nodes:
        if n.kind == INPUT:
            complete(n.id, inputs[n.var], 0.0)
        elif n.kind == CONST:
            complete(n.id, payload_size(n.value), 0.0)
        elif n.kind == INVOCATION and not n.slots:
            invoke(n.id, [], 0.0)
        elif n.kind == TUPLE and not n.slots:
            complete(n.id, (), 0.0)
    while events:
        t, _, fn = heapq.heappop(events)
        fn(t)
    missing = [v for v in graph.output_vars if v not in outputs]
    if missing:
        raise RuntimeError(f"simulation stalled; unbound outputs {missing}")
    return SimResult(makespan, dict(vnet.link_bytes), outputs, done_at)

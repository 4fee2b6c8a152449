from __future__ import annotations

import dataclasses
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlang.compiler import compile_source
from flowlang.dag import OUTPUT
from flowlang.engine import run_to_completion
from flowlang.errors import FormatError, ReassemblyMismatch, UnknownSiteForPort
from flowlang.partitioner import Fragment, Placement, Site, merge_execute_oracle, partition, reassemble
from flowlang.randgen import random_placement, random_workflow
from flowlang.values import Scalar, canonical_bytes

from .conftest import echo_for

SITES = {"A": "http://a.invalid", "B": "http://b.invalid", "C": "http://c.invalid"}


def placement(ports: dict[str, str], root: str = "A") -> Placement:
    return Placement(root, tuple(Site(s, u) for s, u in SITES.items()), ports)


@pytest.fixture
def split(listing1):
    return partition(listing1.graph, placement({"p3": "B", "p4": "B", "p5": "B", "p6": "C"}))


def by_site(fragments) -> dict[str, Fragment]:
    return {f.site: f for f in fragments}


def test_listing1_three_way_split(split, listing1):
    frags = by_site(split)
    assert sorted(frags) == ["A", "B", "C"]
    a, b, c = frags["A"], frags["B"], frags["C"]
    assert {n.label for n in b.nodes} == {"p3.Op3", "p4.Op4", "p5.Op5"}
    # the tuple lives with its only invocation consumer
    assert {n.label for n in c.nodes} == {"y", "p6.Op6"}
    # Op2's value crosses to B once, although three edges need it
    (to_b,) = a.outbound
    assert to_b.to_site == "B" and to_b.edges == (2, 3, 4)
    assert [t.to_site for t in b.outbound] == ["C", "C", "C"]
    assert sorted(c.output_returns) == [12, 13]
    assert sum(len(f.outbound) for f in split) == 6
    assert sum(len(f.edges) for f in split) + sum(len(f.inbound) for f in split) == len(listing1.graph.edges)


def test_single_site_is_one_fragment(listing1):
    (frag,) = partition(listing1.graph, Placement.single("A", "http://a"))
    assert frag.inbound == () and frag.outbound == ()
    assert len(frag.edges) == len(listing1.graph.edges)


def test_reassembly_is_identity(split, listing1):
    assert reassemble(split).to_json() == listing1.graph.to_json()


def test_fragment_json_round_trip(split):
    for frag in split:
        assert Fragment.from_json(json.loads(json.dumps(frag.to_json()))) == frag
    with pytest.raises(FormatError):
        Fragment.from_json({"site": "A"})


def test_corrupted_fragments_are_rejected(split):
    frags = by_site(split)
    b = frags["B"]
    dropped_inbound = dataclasses.replace(b, inbound=b.inbound[1:])
    with pytest.raises(ReassemblyMismatch):
        reassemble([frags["A"], dropped_inbound, frags["C"]])
    wrong_src = dataclasses.replace(frags["A"], outbound=(dataclasses.replace(frags["A"].outbound[0], src=3),))
    with pytest.raises(ReassemblyMismatch):
        reassemble([wrong_src, b, frags["C"]])
    duplicated = dataclasses.replace(b, nodes=b.nodes + frags["C"].nodes[:1])
    with pytest.raises(ReassemblyMismatch):
        reassemble([frags["A"], duplicated, frags["C"]])


def test_placement_validation(listing1):
    with pytest.raises(FormatError):
        Placement("Z", (Site("A", "u"),), {})
    with pytest.raises(FormatError):
        Placement("A", (Site("A", "u"), Site("A", "v")), {})
    with pytest.raises(UnknownSiteForPort):
        partition(listing1.graph, placement({"p1": "Q"}))


def test_placement_file(tmp_path):
    p = placement({"p1": "B"})
    path = tmp_path / "placement.json"
    path.write_text(json.dumps(p.to_json()))
    again = Placement.load(path)
    assert again == p
    assert again.site_of_port("p1") == "B" and again.site_of_port("p2") == "A"


def test_oracle_matches_local_run(split, listing1):
    inputs = {"a": Scalar("int", 5)}
    echo = echo_for(listing1)
    assert merge_execute_oracle(split, inputs, echo) == run_to_completion(listing1.graph, inputs, echo)


@settings(max_examples=120, deadline=None)
@given(st.integers(min_value=0, max_value=100_000), st.integers(min_value=0, max_value=1000))
def test_partition_conserves_edges_and_outputs(seed, pseed):
    w = random_workflow(seed)
    c = compile_source(w.source, resolver=w.resolver())
    g = c.graph
    frags = partition(g, random_placement(random.Random(pseed), w.ports, SITES, "A"))
    # every node in exactly one fragment
    assert sorted(n.id for f in frags for n in f.nodes) == [n.id for n in g.nodes]
    # every edge exactly once: local somewhere or inbound somewhere
    local = [e.id for f in frags for e in f.edges]
    cut = [i.edge for f in frags for i in f.inbound]
    assert sorted(local + cut) == sorted(e.id for e in g.edges)
    # one transfer per (source node, destination site)
    keys = [(t.src, t.to_site) for f in frags for t in f.outbound]
    assert len(keys) == len(set(keys))
    # outputs sit on the root site
    root = by_site(frags)["A"]
    assert {n.var for n in root.nodes if n.kind == OUTPUT} == set(g.output_vars)
    assert reassemble(frags).to_json() == g.to_json()
    echo = echo_for(c)
    assert canonical_bytes(merge_execute_oracle(frags, w.inputs, echo)) == canonical_bytes(
        run_to_completion(g, w.inputs, echo)
    )

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlang import corpus
from flowlang.compiler import compile_source
from flowlang.dag import (
    CONST,
    INVOCATION,
    TUPLE,
    DataflowGraph,
    Edge,
    check_acyclic,
    find_cycle,
    invocation_levels,
    parallel_sets,
    to_dot,
)
from flowlang.errors import CycleError
from flowlang.randgen import random_workflow


def test_listing1_shape(listing1):
    g = listing1.graph
    assert len(g.nodes) == 11 and len(g.edges) == 14
    assert g.input_vars == ["a"]
    assert g.output_vars == ["x", "y", "z"]
    tup = g.of_kind(TUPLE)[0]
    assert tup.arity == 3
    op6 = g.invocation("p6", "Op6")
    # the tuple is taken apart into Op6's three parameters
    assert sorted((e.src_slot, e.dst_param) for e in g.in_edges(op6.id)) == [(0, "a"), (1, "b"), (2, "c")]


def test_parallel_levels_are_antichains(listing1):
    g = listing1.graph
    sched = parallel_sets(g)
    for e in g.edges:
        assert sched.level_of[e.src] < sched.level_of[e.dst]
    assert invocation_levels(g, sched)[2] == ["p3.Op3", "p4.Op4", "p5.Op5"]


def test_literals_become_const_nodes(resolver):
    src = corpus.source("listing5").replace("a -> p1.Op1", "7 -> p1.Op1").replace("   int a\n", "   int unused\n")
    g = compile_source(src, resolver=resolver).graph
    consts = g.of_kind(CONST)
    assert len(consts) == 1 and consts[0].value.value == 7


def test_json_round_trip(listing1):
    g = listing1.graph
    again = DataflowGraph.from_json(g.to_json())
    assert again.to_json() == g.to_json()
    assert [n.label for n in again.nodes] == [n.label for n in g.nodes]


def test_cycle_detection(listing1):
    g = listing1.graph
    assert find_cycle(g) is None
    op1 = g.invocation("p1", "Op1").id
    op3 = g.invocation("p3", "Op3").id
    back = Edge(len(g.edges), op3, None, op1, "a", g.edges[0].type)
    looped = dataclasses.replace(g, edges=tuple(g.edges) + (back,))
    with pytest.raises(CycleError) as info:
        check_acyclic(looped)
    assert "p1.Op1" in info.value.labels and "p3.Op3" in info.value.labels


def test_dot_export(listing1):
    dot = to_dot(listing1.graph)
    assert dot.startswith('digraph "workflow" {')
    assert dot.count("->") == 14
    assert 'label="p6.Op6", shape=box' in dot


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_random_graphs_are_acyclic_and_consistent(seed):
    w = random_workflow(seed)
    g = compile_source(w.source, resolver=w.resolver()).graph
    assert find_cycle(g) is None
    ids = {n.id for n in g.nodes}
    assert all(e.src in ids and e.dst in ids for e in g.edges)
    assert len({e.id for e in g.edges}) == len(g.edges)
    levels = parallel_sets(g)
    assert sum(len(lv) for lv in levels.levels) == len(g.nodes)
    for n in g.of_kind(INVOCATION):
        assert n.signature is not None and n.endpoint

from __future__ import annotations

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from flowlang.compiler import diagnose
from flowlang.dag import CONST, INVOCATION, TUPLE
from flowlang.randgen import MAX_NODES, random_placement, random_workflow
from flowlang.syntax import Compose, FeedScalar, Retrieve, parse_source


def test_same_seed_same_workflow():
    assert random_workflow(11) == random_workflow(11)
    assert random_workflow(11).source != random_workflow(12).source


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=1_000_000))
def test_generated_workflows_compile_without_errors(seed):
    w = random_workflow(seed)
    compiled, diags = diagnose(w.source, resolver=w.resolver())
    assert compiled is not None, [str(d) for d in diags]
    assert len(compiled.graph.nodes) <= MAX_NODES
    assert set(w.inputs) == set(compiled.graph.input_vars)


def test_generator_covers_every_statement_form():
    seen_kinds: set[str] = set()
    seen_forms: set[type] = set()
    routed = False
    for seed in range(200):
        w = random_workflow(seed)
        spec = parse_source(w.source)
        seen_forms |= {type(s) for s in spec.statements}
        routed |= any(".a1" in line for line in w.source.splitlines())
        compiled, _ = diagnose(w.source, resolver=w.resolver())
        seen_kinds |= {n.kind for n in compiled.graph.nodes}
    assert {INVOCATION, TUPLE, CONST} <= seen_kinds
    assert {Compose, FeedScalar, Retrieve} <= seen_forms
    assert routed


def test_random_placement_uses_declared_sites():
    urls = {"A": "http://a", "B": "http://b"}
    p = random_placement(random.Random(3), [f"p{i}" for i in range(20)], urls, "A")
    assert set(p.ports.values()) <= {"A", "B"}
    assert p.root == "A"

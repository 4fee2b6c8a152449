"""End-to-end acceptance checks, one test per criterion.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL <detail>`` line
(visible even under output capture) and then asserts the same condition.
"""

from __future__ import annotations

import random
import time

import pytest

from flowlang import corpus
from flowlang.analyzer import ERROR
from flowlang.compiler import compile_source, diagnose
from flowlang.dag import INVOCATION, invocation_levels
from flowlang.engine import run_to_completion
from flowlang.invokers import EchoInvoker
from flowlang.orchestrator import OrchestratorClient
from flowlang.randgen import random_placement, random_workflow
from flowlang.testbed import CENTRALIZED, DECENTRALIZED, run_experiment
from flowlang.testbed.network import MB, Link, NetModel
from flowlang.typesys import ANY, INT, STRING, BaseType, ComplexType, TupleType, compatible
from flowlang.values import canonical_bytes

from .conftest import echo_for, start_cluster

KiB = 1024
PATTERNS = ("pipeline", "aggregation", "distribution")


@pytest.fixture
def verdict(capsys):
    def report(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return report


# -- 1: grammar coverage ----------------------------------------------------

_L1 = corpus.source("listing1").split("\n")


def _rep(n: int, text: str) -> str:
    lines = list(_L1)
    lines[n - 1] = text
    return "\n".join(lines)


def _ins(n: int, text: str) -> str:
    lines = list(_L1)
    lines.insert(n - 1, text)
    return "\n".join(lines)


def _del(n: int) -> str:
    lines = list(_L1)
    del lines[n - 1]
    return "\n".join(lines)


# (mutated source, expected code, line, column)
MUTATIONS = {
    "deleted port definition": (_del(13), "UnknownPort", 29, 6),
    "deleted operation name": (_rep(20, "a -> p1."), "ParseError", 20, 9),
    "deleted arrow": (_rep(20, "a p1.Op1"), "ParseError", 20, 3),
    "deleted target comma": (_rep(24, "x -> p3.Op3, p4.Op4 p5.Op5"), "ParseError", 24, 21),
    "deleted closing paren": (_rep(29, "y = (b, c, d"), "ParseError", 29, 13),
    "deleted opening paren": (_rep(29, "y = b, c, d)"), "ParseError", 29, 6),
    "deleted colon": (_rep(15, "input"), "ParseError", 15, 6),
    "deleted is": (_rep(2, "service s1 desc.Service1"), "ParseError", 2, 12),
    "deleted port name": (_rep(8, "port p1 is s1."), "ParseError", 8, 15),
    "deleted type keyword": (_rep(16, "   a"), "ParseError", 16, 4),
    "deleted declaration comma": (_rep(18, "   any x, y z"), "ParseError", 18, 13),
    "truncated statement": (_rep(21, "p1.Op1 ->"), "ParseError", 21, 10),
    "string input to int parameter": (_rep(16, "   string a"), "TypeMismatch", 20, 6),
    "double input to int parameter": (_rep(16, "   double a"), "TypeMismatch", 20, 6),
    "string literal to int parameter": (_rep(20, '"text" -> p1.Op1'), "TypeMismatch", 20, 11),
    "int output bound to string": (_rep(18, "   int x, y, z"), "TypeMismatch", 18, 8),
    "variable assigned twice": (_ins(23, "x = 5"), "DoubleAssignment", 23, 1),
    "tuple assigned twice": (_ins(30, "y = (c, d, b)"), "DoubleAssignment", 30, 1),
    "retrieval assigned twice": (_ins(26, "p4.Op4 -> b"), "DoubleAssignment", 26, 1),
    "cycle through two invocations": (_rep(21, "p3.Op3 -> p2.Op2"), "CycleError", 21, 1),
    "unknown operation": (_rep(20, "a -> p1.Op9"), "UnknownOperation", 20, 6),
    "unknown service": (_rep(2, "service s1 is desc.Service9"), "UnknownService", 2, 1),
    "unknown description": (_rep(2, "service s1 is dsc.Service1"), "UnknownDescription", 2, 1),
    "undefined variable": (_rep(30, "q -> p6.Op6"), "UndefinedVariable", 30, 1),
    "stray character": (_rep(20, "a -> p1.Op1 $"), "LexError", 20, 13),
    "tuple arity": (_rep(29, "y = (b, c)"), "ArityMismatch", 30, 6),
    "unknown parameter": (_rep(30, "y -> p6.Op6.q"), "UnknownParameter", 30, 6),
    "unbound output": (_del(31), "UnboundOutput", 18, 14),
    "unterminated string": (_rep(20, '"abc -> p1.Op1'), "LexError", 20, 1),
    "duplicate alias": (_rep(3, "service s1 is desc.Service2"), "DuplicateDefinition", 3, 1),
    "use of undefined input": (_rep(20, "b -> p1.Op1"), "UndefinedVariable", 20, 1),
    "int literal to string parameter": (_rep(30, "5 -> p6.Op6.a"), "TypeMismatch", 30, 6),
}


def test_criterion_1_grammar_coverage(verdict, resolver):
    t0 = time.perf_counter()
    problems = []
    for name in ("listing1", "listing5", "listing6", "listing7", "listing8", "listing9"):
        compiled, diags = diagnose(corpus.source(name), resolver=resolver)
        if compiled is None or diags:
            problems.append(f"{name}: {[str(d) for d in diags]}")
    for name, (text, code, line, col) in MUTATIONS.items():
        _, diags = diagnose(text, resolver=resolver)
        errors = [(d.code, d.line, d.column) for d in diags if d.severity == ERROR]
        if (code, line, col) not in errors:
            problems.append(f"{name}: expected {code}@{line}:{col}, got {errors}")
    elapsed = time.perf_counter() - t0
    ok = not problems and len(MUTATIONS) >= 25 and elapsed < 1.0
    verdict(1, ok, f"{len(MUTATIONS)} mutations, {elapsed:.3f} s; problems={problems}")


# -- 2: DAG structure ---------------------------------------------------------


def _precedence(graph) -> set[tuple[str, str]]:
    """Transitive 'must run before' pairs between invocation labels."""
    reach: dict[int, set[int]] = {}

    def down(nid: int) -> set[int]:
        if nid not in reach:
            acc: set[int] = set()
            for e in graph.out_edges(nid):
                acc |= {e.dst} | down(e.dst)
            reach[nid] = acc
        return reach[nid]

    inv = {n.id: n.label for n in graph.nodes if n.kind == INVOCATION}
    return {(inv[a], inv[b]) for a in inv for b in down(a) if b in inv}


def test_criterion_2_dag_structure(verdict, listing1, resolver):
    g = listing1.graph
    label = {n.id: (n.kind, n.label) for n in g.nodes}
    kinds = sorted(k for k, _ in label.values())
    expected_kinds = sorted(["input"] + ["invocation"] * 6 + ["tuple"] + ["output"] * 3)
    adjacency = {(label[e.src], label[e.dst]) for e in g.edges}
    inp, tup = ("input", "a"), ("tuple", "y")
    op = {k: ("invocation", f"p{k}.Op{k}") for k in range(1, 7)}
    out = {v: ("output", v) for v in "xyz"}
    expected_adj = {
        (inp, op[1]),
        (op[1], op[2]),
        (op[2], op[3]), (op[2], op[4]), (op[2], op[5]), (op[2], out["x"]),
        (op[3], tup), (op[4], tup), (op[5], tup),
        (tup, op[6]), (tup, out["y"]),
        (op[6], out["z"]),
    }
    levels = invocation_levels(g)
    want_levels = [["p1.Op1"], ["p2.Op2"], ["p3.Op3", "p4.Op4", "p5.Op5"], ["p6.Op6"]]
    tuple_form = compile_source(corpus.source("listing8"), resolver=resolver).graph
    routed_form = compile_source(corpus.source("listing9"), resolver=resolver).graph
    same_prec = _precedence(tuple_form) == _precedence(routed_form)
    ok = (
        kinds == expected_kinds
        and adjacency == expected_adj
        and levels == want_levels
        and same_prec
    )
    verdict(2, ok, f"levels={levels} same_precedence={same_prec} adjacency_ok={adjacency == expected_adj}")


# -- 3: determinism across worker counts -------------------------------------


def test_criterion_3_determinism(verdict):
    t0 = time.perf_counter()
    mismatches = []
    for seed in range(100):
        wf = random_workflow(seed)
        compiled = compile_source(wf.source, resolver=wf.resolver())
        assert len(compiled.graph.nodes) <= 20
        echo = echo_for(compiled)
        oracle = canonical_bytes(run_to_completion(compiled.graph, wf.inputs, echo, workers=1))
        for workers in (2, 4, 8):
            got = canonical_bytes(run_to_completion(compiled.graph, wf.inputs, echo, workers=workers))
            if got != oracle:
                mismatches.append((seed, workers))
    elapsed = time.perf_counter() - t0
    verdict(3, not mismatches and elapsed < 30.0, f"100 workflows x {{1,2,4,8}} workers, {elapsed:.2f} s, mismatches={mismatches}")


# -- 4: partition/merge identity over HTTP -----------------------------------


def _distributed_pass(resend: int) -> list:
    mismatches = []
    with start_cluster(("A", "B", "C"), lambda site: EchoInvoker(), resend=resend) as cluster:
        client = OrchestratorClient(cluster.urls["A"])
        try:
            for seed in range(100):
                wf = random_workflow(seed)
                compiled = compile_source(wf.source, resolver=wf.resolver())
                echo = echo_for(compiled)
                oracle = canonical_bytes(run_to_completion(compiled.graph, wf.inputs, echo))
                rng = random.Random(seed)
                for k in range(10):
                    placement = random_placement(rng, wf.ports, cluster.urls, "A")
                    got = client.run(wf.source, wf.inputs, placement, catalogs={wf.catalog_url: wf.catalog})
                    if canonical_bytes(got) != oracle:
                        mismatches.append((seed, k, resend))
        finally:
            client.close()
    return mismatches


def test_criterion_4_partition_merge_identity(verdict):
    t0 = time.perf_counter()
    mismatches = _distributed_pass(resend=0) + _distributed_pass(resend=1)
    elapsed = time.perf_counter() - t0
    verdict(
        4,
        not mismatches and elapsed < 300.0,
        f"100 workflows x 10 placements, plain and duplicated tokens, {elapsed:.1f} s, mismatches={mismatches[:5]}",
    )


# -- 5: exact traffic accounting ---------------------------------------------


def test_criterion_5_traffic_accounting(verdict):
    s = 256 * KiB
    report = run_experiment("pipeline", input_bytes=s, repetitions=2)
    cen = {r.bytes_through_root for r in report.rows if r.mode == CENTRALIZED}
    dec = {r.bytes_through_root for r in report.rows if r.mode == DECENTRALIZED}
    ok = cen == {45 * s} and dec == {17 * s}
    verdict(5, ok, f"centralized={sorted(cen)} (want {45 * s}) decentralized={sorted(dec)} (want {17 * s})")


# -- 6: speedup direction -----------------------------------------------------


def test_criterion_6_speedup_direction(verdict):
    t0 = time.perf_counter()
    above_one = {p: run_experiment(p, repetitions=20).speedup(p) for p in PATTERNS}
    sweeps = {}
    for p in PATTERNS:
        sweeps[p] = [
            run_experiment(p, repetitions=20, net=NetModel(Link(20.0, bw * MB))).speedup(p) for bw in (100, 10, 1)
        ]
    monotone = {p: all(a < b for a, b in zip(v, v[1:])) for p, v in sweeps.items()}
    elapsed = time.perf_counter() - t0
    ok = all(v > 1.0 for v in above_one.values()) and all(monotone.values()) and elapsed < 60.0
    detail = " ".join(
        f"{p}: default={above_one[p]:.4f} sweep(100,10,1 MB/s)={[round(x, 4) for x in sweeps[p]]} monotone={monotone[p]}"
        for p in PATTERNS
    )
    verdict(6, ok, f"{detail}; {elapsed:.2f} s")


# -- 7: scaling with input size -------------------------------------------------


def test_criterion_7_gap_scales_with_input(verdict):
    gaps = {}
    for p in PATTERNS:
        gaps[p] = []
        for size in (64 * KiB, 256 * KiB, 1024 * KiB):
            r = run_experiment(p, input_bytes=size, repetitions=20)
            gaps[p].append(r.mean(p, CENTRALIZED) - r.mean(p, DECENTRALIZED))
    ok = all(all(a <= b for a, b in zip(g, g[1:])) for g in gaps.values())
    verdict(7, ok, " ".join(f"{p}: {[round(x, 2) for x in g]} ms" for p, g in gaps.items()))


# -- 8: type-system suite -----------------------------------------------------


BASES = ("int", "double", "float", "decimal", "byte", "boolean", "string", "long", "short")


def test_criterion_8a_any_is_bidirectional(verdict):
    others = [BaseType(b) for b in BASES] + [ComplexType("s", "T"), TupleType((INT, STRING))]
    ok = all(compatible(ANY, t) and compatible(t, ANY) for t in others) and compatible(ANY, ANY)
    verdict(8, ok, "any <-> every type, both directions")


def test_criterion_8b_exact_base_matching(verdict):
    bad = [(a, b) for a in BASES for b in BASES if compatible(BaseType(a), BaseType(b)) != (a == b)]
    verdict(8, not bad, f"base types match only themselves; violations={bad}")


def test_criterion_8c_single_assignment(verdict, resolver):
    _, diags = diagnose(_ins(23, "x = 5"), resolver=resolver)
    codes = [d.code for d in diags if d.severity == ERROR]
    verdict(8, "DoubleAssignment" in codes, f"second definition of x rejected: {codes}")


def test_criterion_8d_tuple_arity(verdict, resolver):
    _, short = diagnose(_rep(29, "y = (b, c)"), resolver=resolver)
    _, exact = diagnose(corpus.source("listing1"), resolver=resolver)
    ok = "ArityMismatch" in [d.code for d in short] and not exact
    ok = ok and not compatible(TupleType((INT, INT)), TupleType((INT, INT, INT)))
    ok = ok and compatible(TupleType((INT, ANY)), TupleType((INT, STRING)))
    verdict(8, ok, "tuple arity must agree")


def test_criterion_8e_complex_type_names(verdict, resolver):
    same = compatible(ComplexType("schm", "newType"), ComplexType("schm", "newType"))
    other_name = compatible(ComplexType("schm", "newType"), ComplexType("schm", "oldType"))
    other_schema = compatible(ComplexType("schm", "newType"), ComplexType("other", "newType"))
    base_vs_complex = compatible(ComplexType("schm", "newType"), STRING)
    compiled, diags = diagnose(corpus.source("listing10"), resolver=resolver)
    renamed = corpus.source("listing10").replace("schm:newType x", "schm:otherType x")
    _, bad = diagnose(renamed, resolver=resolver)
    ok = (
        same and not other_name and not other_schema and not base_vs_complex
        and compiled is not None
        and any(d.severity == ERROR for d in bad)
    )
    verdict(8, ok, f"complex types match by name; renamed type -> {[d.code for d in bad]}")

"""Compile a resolved workflow into a dataflow graph.

Variables disappear here: a variable defined by node A and consumed by B and
C becomes two edges A->B and A->C.  Scalars become Const nodes and tuple
assignments become TupleAssembly nodes.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property

from .analyzer import ResolvedWorkflow, bind_feed
from .catalog import OperationSig
from .errors import CycleError
from .syntax.nodes import Assign, Compose, FeedScalar, FeedVariable, Literal, Retrieve, TupleExpr, VarRef
from .typesys import BaseType, TupleType, TypeExpr, type_from_json, type_to_json
from .values import Scalar, Value, from_json, to_json

INPUT = "input"
OUTPUT = "output"
INVOCATION = "invocation"
TUPLE = "tuple"
CONST = "const"

Slot = str | int | None


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    type: TypeExpr
    var: str | None = None
    port: str | None = None
    operation: str | None = None
    endpoint: str | None = None
    signature: OperationSig | None = None
    arity: int = 0
    value: Value | None = None

    @property
    def slots(self) -> tuple[Slot, ...]:
        """Input slots that must all be filled before the node can fire."""
        if self.kind == INVOCATION:
            return self.signature.param_names
        if self.kind == TUPLE:
            return tuple(range(self.arity))
        if self.kind == OUTPUT:
            return (None,)
        return ()

    def slot_type(self, slot: Slot) -> TypeExpr:
        if self.kind == INVOCATION:
            return self.signature.param_type(slot)
        if self.kind == TUPLE:
            return self.type.elements[slot]
        return self.type

    @property
    def label(self) -> str:
        if self.kind == INVOCATION:
            return f"{self.port}.{self.operation}"
        if self.kind == CONST:
            return repr(self.value.value) if isinstance(self.value, Scalar) else "const"
        return self.var


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    src_slot: int | None
    dst: int
    dst_param: Slot
    type: TypeExpr


@dataclass(frozen=True)
class DataflowGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    @cached_property
    def _by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def _out(self) -> dict[int, list[Edge]]:
        out = defaultdict(list)
        for e in self.edges:
            out[e.src].append(e)
        return out

    @cached_property
    def _in(self) -> dict[int, list[Edge]]:
        inc = defaultdict(list)
        for e in self.edges:
            inc[e.dst].append(e)
        return inc

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def out_edges(self, node_id: int) -> list[Edge]:
        return self._out.get(node_id, [])

    def in_edges(self, node_id: int) -> list[Edge]:
        return self._in.get(node_id, [])

    def edge(self, edge_id: int) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def of_kind(self, kind: str) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    def invocation(self, port: str, operation: str) -> Node:
        for n in self.nodes:
            if n.kind == INVOCATION and n.port == port and n.operation == operation:
                return n
        raise KeyError(f"{port}.{operation}")

    @property
    def input_vars(self) -> list[str]:
        return [n.var for n in self.of_kind(INPUT)]

    @property
    def output_vars(self) -> list[str]:
        return [n.var for n in self.of_kind(OUTPUT)]

    def to_json(self) -> dict:
        return {
            "nodes": [node_to_json(n) for n in self.nodes],
            "edges": [edge_to_json(e) for e in self.edges],
        }

    @classmethod
    def from_json(cls, doc: dict) -> DataflowGraph:
        return cls(
            tuple(node_from_json(n) for n in doc["nodes"]),
            tuple(edge_from_json(e) for e in doc["edges"]),
        )


def signature_to_json(sig: OperationSig) -> dict:
    return {
        "name": sig.name,
        "inputs": [{"name": n, "type": type_to_json(t)} for n, t in sig.inputs],
        "output": {"type": type_to_json(sig.output)},
    }


def signature_from_json(doc: dict) -> OperationSig:
    return OperationSig(
        doc["name"],
        tuple((p["name"], type_from_json(p["type"])) for p in doc["inputs"]),
        type_from_json(doc["output"]["type"]),
    )


def node_to_json(n: Node) -> dict:
    doc: dict = {"id": n.id, "kind": n.kind, "type": type_to_json(n.type)}
    if n.var is not None:
        doc["var"] = n.var
    if n.kind == INVOCATION:
        doc.update(port=n.port, op=n.operation, endpoint=n.endpoint, signature=signature_to_json(n.signature))
    if n.kind == TUPLE:
        doc["arity"] = n.arity
    if n.kind == CONST:
        doc["value"] = to_json(n.value)
    return doc


def node_from_json(doc: dict) -> Node:
    kind = doc["kind"]
    return Node(
        id=doc["id"],
        kind=kind,
        type=type_from_json(doc["type"]),
        var=doc.get("var"),
        port=doc.get("port"),
        operation=doc.get("op"),
        endpoint=doc.get("endpoint"),
        signature=signature_from_json(doc["signature"]) if "signature" in doc else None,
        arity=doc.get("arity", 0),
        value=from_json(doc["value"]) if "value" in doc else None,
    )


def edge_to_json(e: Edge) -> dict:
    return {
        "id": e.id,
        "src": e.src,
        "slot": e.src_slot,
        "dst": e.dst,
        "param": e.dst_param,
        "type": type_to_json(e.type),
    }


def edge_from_json(doc: dict) -> Edge:
    return Edge(doc["id"], doc["src"], doc["slot"], doc["dst"], doc["param"], type_from_json(doc["type"]))


def literal_value(lit: Literal) -> Scalar:
    return Scalar(lit.type, lit.value)


class _Builder:
    def __init__(self, resolved: ResolvedWorkflow) -> None:
        self.rw = resolved
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.invocations: dict[tuple[str, str], int] = {}
        self.var_source: dict[str, int] = {}

    def add_node(self, **kw) -> int:
        node = Node(id=len(self.nodes), **kw)
        self.nodes.append(node)
        return node.id

    def add_edge(self, src: int, slot: int | None, dst: int, param: Slot) -> None:
        t = self.nodes[src].type
        if slot is not None:
            t = t.elements[slot]
        self.edges.append(Edge(len(self.edges), src, slot, dst, param, t))

    def invocation(self, key: tuple[str, str]) -> int:
        if key not in self.invocations:
            sig = self.rw.signatures[key]
            self.invocations[key] = self.add_node(
                kind=INVOCATION,
                type=sig.output,
                port=key[0],
                operation=key[1],
                endpoint=self.rw.endpoint(key),
                signature=sig,
            )
        return self.invocations[key]

    def const(self, lit: Literal) -> int:
        return self.add_node(kind=CONST, type=BaseType(lit.type), value=literal_value(lit))

    def feed(self, src: int, target) -> None:
        key = target.key
        dst = self.invocation(key)
        for param, slot in bind_feed(self.rw.signatures[key], target, self.nodes[src].type):
            self.add_edge(src, slot, dst, param)

    def build(self) -> DataflowGraph:
        for name, t in self.rw.inputs:
            self.var_source[name] = self.add_node(kind=INPUT, type=t, var=name)

        for stmt in self.rw.spec.statements:
            if isinstance(stmt, FeedScalar):
                src = self.const(stmt.scalar)
                for target in stmt.targets:
                    self.feed(src, target)
            elif isinstance(stmt, FeedVariable):
                for target in stmt.targets:
                    self.feed(self.var_source[stmt.var], target)
            elif isinstance(stmt, Compose):
                src = self.invocation(stmt.source.key)
                for target in stmt.targets:
                    self.feed(src, target)
            elif isinstance(stmt, Retrieve):
                self.var_source[stmt.var] = self.invocation(stmt.invocation.key)
            elif isinstance(stmt, Assign):
                self.assign(stmt)
            else:
                self.invocation(stmt.invocation.key)

        for name, declared, _ in self.rw.outputs:
            out = self.add_node(kind=OUTPUT, type=declared, var=name)
            self.add_edge(self.var_source[name], None, out, None)

        graph = DataflowGraph(tuple(self.nodes), tuple(self.edges))
        check_acyclic(graph)
        return graph

    def assign(self, stmt: Assign) -> None:
        rhs = stmt.rhs
        if isinstance(rhs, Literal):
            self.var_source[stmt.var] = self.const(rhs)
        elif isinstance(rhs, VarRef):
            self.var_source[stmt.var] = self.var_source[rhs.name]
        else:
            assert isinstance(rhs, TupleExpr)
            sources = [
                self.const(e) if isinstance(e, Literal) else self.var_source[e.name] for e in rhs.elements
            ]
            t = TupleType(tuple(self.nodes[s].type for s in sources))
            node = self.add_node(kind=TUPLE, type=t, var=stmt.var, arity=len(sources))
            for i, s in enumerate(sources):
                self.add_edge(s, None, node, i)
            self.var_source[stmt.var] = node


def build_graph(resolved: ResolvedWorkflow) -> DataflowGraph:
    """Build the dataflow graph; raises :class:`CycleError` on cyclic dataflow."""
    return _Builder(resolved).build()


def find_cycle(graph: DataflowGraph) -> list[int] | None:
    white, grey, black = 0, 1, 2
    color = {n.id: white for n in graph.nodes}
    for root in graph.nodes:
        if color[root.id] != white:
            continue
        stack = [(root.id, iter(graph.out_edges(root.id)))]
        path = [root.id]
        color[root.id] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = black
                stack.pop()
                path.pop()
                continue
            dst = nxt.dst
            if color[dst] == grey:
                return path[path.index(dst):]
            if color[dst] == white:
                color[dst] = grey
                stack.append((dst, iter(graph.out_edges(dst))))
                path.append(dst)
    return None


def check_acyclic(graph: DataflowGraph) -> None:
    cycle = find_cycle(graph)
    if cycle is not None:
        raise CycleError(cycle, [graph.node(n).label for n in cycle])


@dataclass(frozen=True)
class ParallelSchedule:
    levels: tuple[tuple[int, ...], ...]
    level_of: dict[int, int] = field(compare=False, repr=False, default_factory=dict)


def parallel_sets(graph: DataflowGraph) -> ParallelSchedule:
    """Group nodes into antichains by longest path from the sources."""
    indeg = {n.id: 0 for n in graph.nodes}
    for e in graph.edges:
        indeg[e.dst] += 1
    level = {nid: 0 for nid, d in indeg.items() if d == 0}
    ready = sorted(level)
    while ready:
        nid = ready.pop(0)
        for e in graph.out_edges(nid):
            level[e.dst] = max(level.get(e.dst, 0), level[nid] + 1)
            indeg[e.dst] -= 1
            if indeg[e.dst] == 0:
                ready.append(e.dst)
    if len(level) != len(graph.nodes):
        check_acyclic(graph)
    depth = max(level.values(), default=-1) + 1
    levels = tuple(tuple(sorted(n for n, lv in level.items() if lv == i)) for i in range(depth))
    return ParallelSchedule(levels, level)


def invocation_levels(graph: DataflowGraph, schedule: ParallelSchedule | None = None) -> list[list[str]]:
    """The schedule restricted to invocation nodes, as ``port.Op`` labels."""
    schedule = schedule or parallel_sets(graph)
    out = []
    for level in schedule.levels:
        labels = [graph.node(n).label for n in level if graph.node(n).kind == INVOCATION]
        if labels:
            out.append(labels)
    return out


_SHAPES = {INPUT: "ellipse", OUTPUT: "doubleoctagon", INVOCATION: "box", TUPLE: "trapezium", CONST: "plaintext"}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: DataflowGraph, name: str = "workflow") -> str:
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;"]
    for n in graph.nodes:
        lines.append(f"  n{n.id} [label={_quote(n.label)}, shape={_SHAPES[n.kind]}];")
    for e in graph.edges:
        dst = graph.node(e.dst)
        attrs = []
        if dst.kind == INVOCATION:
            attrs.append(f"label={_quote(str(e.dst_param))}")
        elif dst.kind == TUPLE:
            attrs.append(f"label={_quote(f'[{e.dst_param}]')}")
        if e.src_slot is not None:
            attrs.append(f"taillabel={_quote(f'[{e.src_slot}]')}")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  n{e.src} -> n{e.dst}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"

"""Random well-typed workflows for property tests and load generation.

Each generated workflow comes with its own catalog, whose endpoints are
unique to the seed, so many workflows can share one set of mock services.
The generator covers every dataflow statement form: scalar and variable
feeds, multi-target feeds, invocation composition, per-parameter routing,
tuple aggregation and retrieval into variables.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .catalog import Resolver
from .syntax.lexer import encode_string
from .values import Scalar, Value

BASE_TYPES = ("int", "double", "string", "boolean")
MAX_NODES = 20


@dataclass
class _Op:
    k: int
    params: list[str]
    ptypes: list[str]
    out: str
    sources: list[tuple[str, object]] = field(default_factory=list)  # ("var", name) | ("op", j) | ("lit", value)
    mode: str = "single"  # single | route | tuple
    consumers: list[tuple[int, int]] = field(default_factory=list)  # (op k, param index)


@dataclass
class RandomWorkflow:
    seed: int
    source: str
    catalog_url: str
    catalog: dict
    inputs: dict[str, Value]
    ports: list[str]

    def resolver(self) -> Resolver:
        return Resolver({}, documents={self.catalog_url: self.catalog})


def _literal(rng: random.Random, t: str) -> object:
    if t == "int":
        return rng.randint(-50, 500)
    if t == "double":
        return round(rng.uniform(-10, 10), 2)
    if t == "boolean":
        return rng.random() < 0.5
    return rng.choice(["alpha", "beta", "gamma delta", "q\"uote", ""])


def _lit_text(t: str, v: object) -> str:
    if t == "boolean":
        return "true" if v else "false"
    if t == "string":
        return encode_string(v)
    if t == "double":
        return f"{v:.2f}"
    return str(v)


def _lit_type(v: object) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "double"
    return "string"


def random_workflow(seed: int, max_nodes: int = MAX_NODES) -> RandomWorkflow:
    """A workflow whose graph has at most ``max_nodes`` nodes."""
    rng = random.Random(seed)
    inputs = [(f"i{n}", rng.choice(BASE_TYPES)) for n in range(rng.randint(1, 3))]
    ops: list[_Op] = []
    used = len(inputs)
    producers: list[tuple[str, object, str]] = [("var", name, t) for name, t in inputs]

    while len(ops) < 9:
        k = len(ops) + 1
        arity = rng.choice((1, 1, 1, 2, 2, 3))
        op = _Op(k, [f"a{n}" for n in range(arity)], [], rng.choice(BASE_TYPES + ("any",)))
        cost = 1
        for n in range(arity):
            if rng.random() < 0.15:
                t = rng.choice(BASE_TYPES)
                op.sources.append(("lit", _literal(rng, t)))
                op.ptypes.append(t if rng.random() < 0.7 else "any")
                cost += 1  # const node
            else:
                kind, ref, t = rng.choice(producers[-6:] if rng.random() < 0.6 else producers)
                op.sources.append((kind, ref))
                op.ptypes.append(t if rng.random() < 0.75 else "any")
        if arity > 1:
            op.mode = rng.choice(("route", "tuple"))
            if op.mode == "tuple":
                cost += 1
        fed = {ref for kind, ref in op.sources if kind == "op"}
        sinks = sum(1 for o in ops if not o.consumers and o.k not in fed) + 1
        if used + cost + sinks > max_nodes:
            break
        used += cost
        for n, (kind, ref) in enumerate(op.sources):
            if kind == "op":
                ops[ref - 1].consumers.append((k, n))
        ops.append(op)
        producers.append(("op", k, op.out))

    if not ops:
        name, t = inputs[0]
        ops.append(_Op(1, ["a0"], [t], "string", [("var", name)]))
        used += 1

    sinks = [op for op in ops if not op.consumers]
    spare = max_nodes - used - len(sinks)
    outs: dict[int, str] = {op.k: f"o{op.k}" for op in sinks}
    for op in ops:
        if op.k not in outs and spare > 0 and rng.random() < 0.25:
            outs[op.k] = f"o{op.k}"
            spare -= 1
    return _emit(seed, rng, inputs, ops, outs)


def _emit(seed: int, rng: random.Random, inputs, ops: list[_Op], outs: dict[int, str]) -> RandomWorkflow:
    url = f"http://gen.invalid/{seed}/catalog.json"
    services = []
    for op in ops:
        sig = {
            "name": f"Op{op.k}",
            "inputs": [{"name": p, "type": t} for p, t in zip(op.params, op.ptypes)],
            "output": {"type": op.out},
        }
        endpoint = f"http://gen.invalid/{seed}/S{op.k}/P{op.k}"
        services.append({"name": f"S{op.k}", "ports": [{"name": f"P{op.k}", "endpoint": endpoint, "operations": [sig]}]})
    catalog = {"description": f"gen{seed}", "services": services}

    lines = [f"description d is {url}"]
    lines += [f"service s{op.k} is d.S{op.k}" for op in ops]
    lines += [f"port p{op.k} is s{op.k}.P{op.k}" for op in ops]
    lines.append("")
    lines.append("input:")
    lines += [f"   {t} {name}" for name, t in inputs]
    lines.append("output:")
    out_type = {}
    for op in ops:
        if op.k in outs:
            out_type[op.k] = op.out if rng.random() < 0.7 else "any"
            lines.append(f"   {out_type[op.k]} {outs[op.k]}")
    lines.append("")

    inv = {op.k: f"p{op.k}.Op{op.k}" for op in ops}
    # an op result with a single single-parameter consumer and no output is composed directly
    composed: dict[int, str] = {}
    for op in ops:
        if op.k not in outs and len(op.consumers) == 1:
            ck, n = op.consumers[0]
            cons = ops[ck - 1]
            if cons.mode == "single":
                composed[op.k] = inv[ck]
            elif cons.mode == "route":
                composed[op.k] = f"{inv[ck]}.{cons.params[n]}"
    var_of = {op.k: outs.get(op.k, f"v{op.k}") for op in ops}

    def ref(kind: str, r: object) -> str:
        return r if kind == "var" else var_of[r]

    var_feeds: dict[str, list[str]] = {}
    body: list[str] = []
    for op in ops:
        targets = []
        if op.mode == "tuple":
            elems = []
            for kind, r in op.sources:
                elems.append(_lit_text(_lit_type(r), r) if kind == "lit" else ref(kind, r))
            body.append(f"t{op.k} = ({', '.join(elems)})")
            var_feeds.setdefault(f"t{op.k}", []).append(inv[op.k])
        else:
            for n, (kind, r) in enumerate(op.sources):
                target = inv[op.k] if op.mode == "single" else f"{inv[op.k]}.{op.params[n]}"
                if kind == "lit":
                    body.append(f"{_lit_text(_lit_type(r), r)} -> {target}")
                elif kind == "op" and r in composed:
                    continue
                else:
                    targets.append((ref(kind, r), target))
        for v, target in targets:
            var_feeds.setdefault(v, []).append(target)
        if op.k in composed:
            body.append(f"{inv[op.k]} -> {composed[op.k]}")
        else:
            if op.k in outs or op.consumers:
                body.append(f"{inv[op.k]} -> {var_of[op.k]}")
    # variable feeds: occasionally one statement per target, usually grouped
    for v, targets in var_feeds.items():
        if len(targets) > 1 and rng.random() < 0.3:
            body += [f"{v} -> {t}" for t in targets]
        else:
            body.append(f"{v} -> {', '.join(targets)}")
    lines += body
    source = "\n".join(lines) + "\n"

    values: dict[str, Value] = {name: Scalar(t, _literal(rng, t)) for name, t in inputs}
    ports = [f"p{op.k}" for op in ops]
    return RandomWorkflow(seed, source, url, catalog, values, ports)


def random_placement(rng: random.Random, ports: list[str], site_urls: dict[str, str], root: str):
    """Map each port to a random site (possibly leaving it on the root by omission)."""
    from .partitioner import Placement, Site

    sites = tuple(Site(s, u) for s, u in site_urls.items())
    mapping = {}
    for p in ports:
        choice = rng.choice(list(site_urls) + [None])
        if choice is not None:
            mapping[p] = choice
    return Placement(root, sites, mapping)

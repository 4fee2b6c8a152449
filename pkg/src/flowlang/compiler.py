"""One-call compilation: source text to checked dataflow graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .analyzer import ERROR, Diagnostic, ResolvedWorkflow, check_types, resolve
from .catalog import Resolver, ServiceCatalog, TypeSchema
from .dag import DataflowGraph, build_graph
from .errors import CompileError, CycleError, LexError, ParseError
from .syntax import WorkflowSpec, parse, tokenize
from .syntax.nodes import Pos


@dataclass
class Compiled:
    spec: WorkflowSpec
    resolved: ResolvedWorkflow
    graph: DataflowGraph
    warnings: list[Diagnostic]


def load_documents(spec: WorkflowSpec, resolver: Resolver):
    """Fetch every catalog and schema document the workflow refers to."""
    catalogs = resolver.catalogs(sorted({d.url for d in spec.descriptions}))
    schemas = resolver.schemas(sorted({s.url for s in spec.schemas}))
    return catalogs, schemas


def diagnose(
    source: str,
    catalogs: Mapping[str, ServiceCatalog] | None = None,
    schemas: Mapping[str, TypeSchema] | None = None,
    resolver: Resolver | None = None,
) -> tuple[Compiled | None, list[Diagnostic]]:
    """Run every compiler stage, collecting diagnostics instead of raising.

    Catalog documents come from ``catalogs``/``schemas`` when given,
    otherwise from ``resolver``.  I/O errors from the resolver propagate.
    """
    try:
        spec = parse(tokenize(source))
    except LexError as exc:
        return None, [Diagnostic(ERROR, exc.code, str(exc), exc.line, exc.column)]
    except ParseError as exc:
        return None, [Diagnostic(ERROR, exc.code, str(exc), exc.line, exc.column)]

    if catalogs is None:
        if resolver is None:
            raise ValueError("need catalogs or a resolver")
        catalogs, loaded_schemas = load_documents(spec, resolver)
        schemas = loaded_schemas if schemas is None else schemas
    result = resolve(spec, catalogs, schemas)
    if isinstance(result, list):
        return None, result
    diags = check_types(result)
    if any(d.severity == ERROR for d in diags):
        return None, diags
    try:
        graph = build_graph(result)
    except CycleError as exc:
        first = graph_pos(result, exc)
        return None, diags + [Diagnostic.at(first, exc.code, str(exc))]
    return Compiled(spec, result, graph, diags), diags


def graph_pos(resolved: ResolvedWorkflow, exc: CycleError) -> Pos:
    positions = []
    for label in exc.labels:
        port, _, op = label.partition(".")
        if (port, op) in resolved.invocation_pos:
            positions.append(resolved.invocation_pos[(port, op)])
    return min(positions, key=lambda p: (p.line, p.column)) if positions else Pos(0, 0)


def compile_source(
    source: str,
    catalogs: Mapping[str, ServiceCatalog] | None = None,
    schemas: Mapping[str, TypeSchema] | None = None,
    resolver: Resolver | None = None,
) -> Compiled:
    compiled, diags = diagnose(source, catalogs, schemas, resolver)
    if compiled is None:
        raise CompileError([d for d in diags if d.severity == ERROR])
    return compiled

"""Canonical pretty-printer; the inverse of the parser up to layout."""

from __future__ import annotations

from decimal import Decimal
from itertools import groupby

from .lexer import encode_string
from .nodes import (
    Assign,
    BareInvocation,
    Compose,
    DataflowStatement,
    FeedScalar,
    FeedVariable,
    Literal,
    Retrieve,
    TupleExpr,
    VarDecl,
    VarRef,
    WorkflowSpec,
)


def render_literal(lit: Literal) -> str:
    if lit.type == "boolean":
        return "true" if lit.value else "false"
    if lit.type == "string":
        return encode_string(lit.value)
    if lit.type == "double":
        text = format(Decimal(repr(float(lit.value))), "f")
        return text if "." in text else text + ".0"
    return str(lit.value)


def _operand(x: VarRef | Literal) -> str:
    return x.name if isinstance(x, VarRef) else render_literal(x)


def render_statement(stmt: DataflowStatement) -> str:
    if isinstance(stmt, BareInvocation):
        return str(stmt.invocation)
    if isinstance(stmt, FeedScalar):
        return f"{render_literal(stmt.scalar)} -> " + ", ".join(map(str, stmt.targets))
    if isinstance(stmt, FeedVariable):
        return f"{stmt.var} -> " + ", ".join(map(str, stmt.targets))
    if isinstance(stmt, Compose):
        return f"{stmt.source} -> " + ", ".join(map(str, stmt.targets))
    if isinstance(stmt, Retrieve):
        return f"{stmt.invocation} -> {stmt.var}"
    if isinstance(stmt, Assign):
        rhs = stmt.rhs
        if isinstance(rhs, TupleExpr):
            text = "(" + ", ".join(_operand(e) for e in rhs.elements) + ")"
        else:
            text = _operand(rhs)
        return f"{stmt.var} = {text}"
    raise TypeError(f"not a statement: {stmt!r}")


def _variable_lines(decls: tuple[VarDecl, ...]) -> list[str]:
    lines = []
    for t, group in groupby(decls, key=lambda d: d.type):
        lines.append(f"    {t} " + ", ".join(d.name for d in group))
    return lines


def render(spec: WorkflowSpec) -> str:
    lines: list[str] = []
    lines += [f"description {d.name} is {d.url}" for d in spec.descriptions]
    lines += [f"service {s.name} is {s.description}.{s.service}" for s in spec.services]
    lines += [f"port {p.name} is {p.service}.{p.port}" for p in spec.ports]
    lines += [f"schema {s.name} is {s.url}" for s in spec.schemas]
    if lines:
        lines.append("")
    lines.append("input:")
    lines += _variable_lines(spec.interface.inputs)
    lines.append("output:")
    lines += _variable_lines(spec.interface.outputs)
    if spec.statements:
        lines.append("")
        lines += [render_statement(s) for s in spec.statements]
    return "\n".join(lines) + "\n"

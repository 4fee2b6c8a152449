"""Identifier resolution, type inference and type checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .catalog import OperationSig, PortDesc, ServiceCatalog, TypeSchema
from .errors import CompileError, LookupFailure
from .syntax.nodes import (
    Assign,
    BareInvocation,
    Compose,
    FeedScalar,
    FeedVariable,
    Invocation,
    Literal,
    Pos,
    Retrieve,
    TupleExpr,
    VarRef,
    WorkflowSpec,
)
from .typesys import BaseType, ComplexType, TupleType, TypeExpr, compatible

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    line: int = 0
    column: int = 0

    @classmethod
    def at(cls, pos: Pos, code: str, message: str, severity: str = ERROR) -> Diagnostic:
        return cls(severity, code, message, pos.line, pos.column)

    def as_dict(self) -> dict:
        return {"severity": self.severity, "code": self.code, "line": self.line, "col": self.column, "msg": self.message}

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.code}: {self.message}"


def has_errors(diagnostics) -> bool:
    return any(d.severity == ERROR for d in diagnostics)


@dataclass(frozen=True)
class PortBinding:
    alias: str
    endpoint: str
    service: str
    port: PortDesc


@dataclass(frozen=True)
class FromVar:
    name: str


@dataclass(frozen=True)
class FromScalar:
    literal: Literal


@dataclass(frozen=True)
class FromInvocation:
    key: tuple[str, str]


FeedSource = FromVar | FromScalar | FromInvocation


@dataclass(frozen=True)
class Feed:
    """One value flowing into one target invocation."""

    source: FeedSource
    target: Invocation
    pos: Pos


@dataclass(frozen=True)
class Definition:
    var: str
    kind: str  # input | retrieve | assign
    pos: Pos


@dataclass
class ResolvedWorkflow:
    spec: WorkflowSpec
    ports: dict[str, PortBinding]
    signatures: dict[tuple[str, str], OperationSig]
    var_types: dict[str, TypeExpr]
    definitions: dict[str, list[Definition]]
    inputs: list[tuple[str, TypeExpr]]
    outputs: list[tuple[str, TypeExpr, Pos]]
    feeds: list[Feed] = field(default_factory=list)
    invocation_order: list[tuple[str, str]] = field(default_factory=list)
    invocation_pos: dict[tuple[str, str], Pos] = field(default_factory=dict)

    def endpoint(self, key: tuple[str, str]) -> str:
        return self.ports[key[0]].endpoint

    def source_type(self, source: FeedSource) -> TypeExpr:
        if isinstance(source, FromVar):
            return self.var_types[source.name]
        if isinstance(source, FromScalar):
            return BaseType(source.literal.type)
        return self.signatures[source.key].output


class BindingError(Exception):
    def __init__(self, code: str, message: str) -> None:
        self.code = code
        super().__init__(message)


def bind_feed(sig: OperationSig, target: Invocation, source_type: TypeExpr) -> list[tuple[str, int | None]]:
    """Map a fed value onto parameters as ``(param, tuple-slot or None)``.

    A ``.param`` target takes the whole value; a tuple spreads positionally
    over a parameter list of equal length; anything else needs a
    single-parameter operation.
    """
    if target.parameter is not None:
        return [(target.parameter, None)]
    params = sig.param_names
    if isinstance(source_type, TupleType):
        if len(source_type.elements) != len(params):
            raise BindingError(
                "ArityMismatch",
                f"{target}: tuple of {len(source_type.elements)} values fed to an operation with {len(params)} parameters",
            )
        return [(p, i) for i, p in enumerate(params)]
    if len(params) != 1:
        raise BindingError(
            "ArityMismatch", f"{target}: one value fed to an operation with {len(params)} parameters"
        )
    return [(params[0], None)]


def _literal_type(lit: Literal) -> BaseType:
    return BaseType(lit.type)


class _Resolver:
    def __init__(self, spec, catalogs, schemas) -> None:
        self.spec = spec
        self.catalogs = catalogs
        self.schemas_by_url = schemas
        self.diags: list[Diagnostic] = []
        self.ports: dict[str, PortBinding] = {}
        self.schema_alias: dict[str, TypeSchema] = {}
        self.signatures: dict[tuple[str, str], OperationSig] = {}
        self.var_types: dict[str, TypeExpr] = {}
        self.definitions: dict[str, list[Definition]] = {}
        self.feeds: list[Feed] = []
        self.order: list[tuple[str, str]] = []
        self.inv_pos: dict[tuple[str, str], Pos] = {}

    def error(self, pos: Pos, code: str, message: str) -> None:
        self.diags.append(Diagnostic.at(pos, code, message))

    def run(self):
        spec = self.spec
        for kind, items in (
            ("description", spec.descriptions),
            ("service", spec.services),
            ("port", spec.ports),
            ("schema", spec.schemas),
        ):
            seen: set[str] = set()
            for item in items:
                if item.name in seen:
                    self.error(item.pos, "DuplicateDefinition", f"{kind} {item.name!r} defined twice")
                seen.add(item.name)

        descs: dict[str, ServiceCatalog] = {}
        for d in spec.descriptions:
            if d.url in self.catalogs:
                descs.setdefault(d.name, self.catalogs[d.url])
            else:
                self.error(d.pos, "UnknownDescription", f"no service description available for {d.url}")

        services = {}
        for s in spec.services:
            if s.description not in descs:
                if s.description not in {d.name for d in spec.descriptions}:
                    self.error(s.pos, "UnknownDescription", f"undefined description {s.description!r}")
                continue
            try:
                services.setdefault(s.name, descs[s.description].service(s.service))
            except LookupFailure:
                self.error(s.pos, "UnknownService", f"UnknownService({s.service})")

        for p in spec.ports:
            if p.service not in services:
                if p.service not in {s.name for s in spec.services}:
                    self.error(p.pos, "UnknownService", f"UnknownService({p.service})")
                continue
            svc = services[p.service]
            try:
                desc = svc.port(p.port)
            except LookupFailure:
                self.error(p.pos, "UnknownPort", f"UnknownPort({p.port})")
                continue
            self.ports.setdefault(p.name, PortBinding(p.name, desc.endpoint, svc.name, desc))

        for sc in spec.schemas:
            if sc.url in self.schemas_by_url:
                self.schema_alias.setdefault(sc.name, self.schemas_by_url[sc.url])
            else:
                self.error(sc.pos, "UnknownSchema", f"no type schema available for {sc.url}")

        inputs = []
        for decl in spec.interface.inputs:
            t = self.resolve_type(decl.type, decl.pos)
            inputs.append((decl.name, t))
            self.define(decl.name, "input", decl.pos, t)
        outputs = []
        seen_out: set[str] = set()
        for decl in spec.interface.outputs:
            if decl.name in seen_out:
                self.error(decl.pos, "DuplicateDefinition", f"output {decl.name!r} declared twice")
            seen_out.add(decl.name)
            outputs.append((decl.name, self.resolve_type(decl.type, decl.pos), decl.pos))

        for stmt in spec.statements:
            self.statement(stmt)

        if has_errors(self.diags):
            return self.diags
        return ResolvedWorkflow(
            spec=spec,
            ports=self.ports,
            signatures=self.signatures,
            var_types=self.var_types,
            definitions=self.definitions,
            inputs=inputs,
            outputs=outputs,
            feeds=self.feeds,
            invocation_order=self.order,
            invocation_pos=self.inv_pos,
        )

    def resolve_type(self, t, pos: Pos) -> TypeExpr:
        if not isinstance(t, ComplexType):
            return t
        schema = self.schema_alias.get(t.schema)
        if schema is None:
            if t.schema not in {s.name for s in self.spec.schemas}:
                self.error(pos, "UnknownSchema", f"undefined schema {t.schema!r}")
            return t
        if schema.fields(t.name) is None:
            self.error(pos, "UnknownType", f"schema {t.schema!r} has no type {t.name!r}")
        return ComplexType(schema.schema, t.name)

    def define(self, var: str, kind: str, pos: Pos, t: TypeExpr | None) -> None:
        self.definitions.setdefault(var, []).append(Definition(var, kind, pos))
        if var not in self.var_types and t is not None:
            self.var_types[var] = t

    def invocation(self, inv: Invocation) -> OperationSig | None:
        binding = self.ports.get(inv.port)
        if binding is None:
            if inv.port not in {p.name for p in self.spec.ports}:
                self.error(inv.pos, "UnknownPort", f"UnknownPort({inv.port})")
            return None
        try:
            sig = binding.port.operation(inv.operation)
        except LookupFailure:
            self.error(inv.pos, "UnknownOperation", f"UnknownOperation({inv.operation})")
            return None
        if inv.parameter is not None and sig.param_type(inv.parameter) is None:
            self.error(inv.pos, "UnknownParameter", f"{inv.port}.{inv.operation} has no parameter {inv.parameter!r}")
            return None
        if inv.key not in self.signatures:
            self.signatures[inv.key] = sig
            self.order.append(inv.key)
            self.inv_pos[inv.key] = inv.pos
        return sig

    def use(self, name: str, pos: Pos) -> bool:
        if name not in self.definitions:
            self.error(pos, "UndefinedVariable", f"variable {name!r} used before definition")
            return False
        return True

    def statement(self, stmt) -> None:
        if isinstance(stmt, BareInvocation):
            self.invocation(stmt.invocation)
        elif isinstance(stmt, FeedScalar):
            for target in stmt.targets:
                if self.invocation(target):
                    self.feeds.append(Feed(FromScalar(stmt.scalar), target, target.pos))
        elif isinstance(stmt, FeedVariable):
            known = self.use(stmt.var, stmt.pos)
            for target in stmt.targets:
                if self.invocation(target) and known:
                    self.feeds.append(Feed(FromVar(stmt.var), target, target.pos))
        elif isinstance(stmt, Compose):
            ok = self.invocation(stmt.source) is not None
            for target in stmt.targets:
                if self.invocation(target) and ok:
                    self.feeds.append(Feed(FromInvocation(stmt.source.key), target, target.pos))
        elif isinstance(stmt, Retrieve):
            sig = self.invocation(stmt.invocation)
            self.define(stmt.var, "retrieve", stmt.pos, sig.output if sig else None)
        elif isinstance(stmt, Assign):
            self.define(stmt.var, "assign", stmt.pos, self.rhs_type(stmt.rhs))

    def rhs_type(self, rhs) -> TypeExpr | None:
        if isinstance(rhs, Literal):
            return _literal_type(rhs)
        if isinstance(rhs, VarRef):
            return self.var_types.get(rhs.name) if self.use(rhs.name, rhs.pos) else None
        assert isinstance(rhs, TupleExpr)
        elements = []
        for e in rhs.elements:
            if isinstance(e, Literal):
                elements.append(_literal_type(e))
            elif self.use(e.name, e.pos) and e.name in self.var_types:
                elements.append(self.var_types[e.name])
            else:
                return None
        return TupleType(tuple(elements))


def resolve(
    spec: WorkflowSpec,
    catalogs: Mapping[str, ServiceCatalog],
    schemas: Mapping[str, TypeSchema] | None = None,
) -> ResolvedWorkflow | list[Diagnostic]:
    """Bind identifiers to catalog entries and infer variable types.

    ``catalogs`` and ``schemas`` are keyed by the URL written in the
    workflow's ``description``/``schema`` definitions.  Returns the resolved
    workflow, or the list of error diagnostics.
    """
    return _Resolver(spec, catalogs, schemas or {}).run()


def check_types(resolved: ResolvedWorkflow) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    for var, sites in resolved.definitions.items():
        for extra in sites[1:]:
            diags.append(Diagnostic.at(extra.pos, "DoubleAssignment", f"variable {var!r} assigned more than once"))

    fed: dict[tuple[tuple[str, str], str], Pos] = {}
    for feed in resolved.feeds:
        sig = resolved.signatures[feed.target.key]
        src_type = resolved.source_type(feed.source)
        try:
            bindings = bind_feed(sig, feed.target, src_type)
        except BindingError as exc:
            diags.append(Diagnostic.at(feed.pos, exc.code, str(exc)))
            continue
        for param, slot in bindings:
            value_type = src_type if slot is None else src_type.elements[slot]
            expected = sig.param_type(param)
            if not compatible(expected, value_type):
                diags.append(
                    Diagnostic.at(
                        feed.pos,
                        "TypeMismatch",
                        f"{feed.target.port}.{feed.target.operation}.{param}: expected {expected}, found {value_type}",
                    )
                )
            key = (feed.target.key, param)
            if key in fed:
                diags.append(
                    Diagnostic.at(feed.pos, "DuplicateFeed", f"parameter {param!r} of {feed.target.port}.{feed.target.operation} fed twice")
                )
            else:
                fed[key] = feed.pos

    for key in resolved.invocation_order:
        sig = resolved.signatures[key]
        missing = [p for p in sig.param_names if (key, p) not in fed]
        if missing:
            diags.append(
                Diagnostic.at(
                    resolved.invocation_pos[key],
                    "MissingParameter",
                    f"{key[0]}.{key[1]} never receives parameter(s) {', '.join(missing)}",
                )
            )

    for name, declared, pos in resolved.outputs:
        if name not in resolved.definitions:
            diags.append(Diagnostic.at(pos, "UnboundOutput", f"output {name!r} is never defined"))
        elif name in resolved.var_types and not compatible(declared, resolved.var_types[name]):
            diags.append(
                Diagnostic.at(pos, "TypeMismatch", f"output {name!r}: declared {declared}, found {resolved.var_types[name]}")
            )

    diags.extend(_usage_warnings(resolved))
    return diags


def _usage_warnings(resolved: ResolvedWorkflow) -> list[Diagnostic]:
    used_vars: set[str] = {name for name, _, _ in resolved.outputs}
    used_invocations: set[tuple[str, str]] = set()
    for feed in resolved.feeds:
        if isinstance(feed.source, FromVar):
            used_vars.add(feed.source.name)
        elif isinstance(feed.source, FromInvocation):
            used_invocations.add(feed.source.key)
    for stmt in resolved.spec.statements:
        if isinstance(stmt, Assign):
            refs = stmt.rhs.elements if isinstance(stmt.rhs, TupleExpr) else (stmt.rhs,)
            used_vars.update(r.name for r in refs if isinstance(r, VarRef))

    out = []
    retrieved: set[tuple[str, str]] = set()
    for stmt in resolved.spec.statements:
        if isinstance(stmt, Retrieve):
            retrieved.add(stmt.invocation.key)
    for key in resolved.invocation_order:
        if key not in used_invocations and key not in retrieved:
            out.append(
                Diagnostic.at(resolved.invocation_pos[key], "UnusedResult", f"result of {key[0]}.{key[1]} is never used", WARNING)
            )
    for var, sites in resolved.definitions.items():
        if var not in used_vars:
            out.append(Diagnostic.at(sites[0].pos, "UnusedVariable", f"variable {var!r} is never used", WARNING))
    return out


def analyze(
    spec: WorkflowSpec,
    catalogs: Mapping[str, ServiceCatalog],
    schemas: Mapping[str, TypeSchema] | None = None,
) -> ResolvedWorkflow:
    """Resolve and type-check, raising :class:`CompileError` on any error."""
    result = resolve(spec, catalogs, schemas)
    if isinstance(result, list):
        raise CompileError(result)
    diags = check_types(result)
    errors = [d for d in diags if d.severity == ERROR]
    if errors:
        raise CompileError(errors)
    return result

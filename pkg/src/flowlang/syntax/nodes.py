"""Syntax tree for workflow specifications.

Positions are carried for diagnostics but ignored by equality, so a tree
re-parsed from rendered text compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..typesys import BaseType, ComplexType


@dataclass(frozen=True)
class Pos:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


NOWHERE = Pos(0, 0)


def _pos() -> Pos:
    return field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Description:
    name: str
    url: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class ServiceDef:
    name: str
    description: str
    service: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class PortDef:
    name: str
    service: str
    port: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class SchemaDef:
    name: str
    url: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class VarDecl:
    type: BaseType | ComplexType
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Interface:
    inputs: tuple[VarDecl, ...] = ()
    outputs: tuple[VarDecl, ...] = ()


@dataclass(frozen=True)
class Literal:
    """A scalar literal; ``type`` is int, double, boolean or string."""

    type: str
    value: int | float | bool | str
    pos: Pos = _pos()


@dataclass(frozen=True)
class VarRef:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class TupleExpr:
    elements: tuple[VarRef | Literal, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Invocation:
    port: str
    operation: str
    parameter: str | None = None
    pos: Pos = _pos()

    @property
    def key(self) -> tuple[str, str]:
        return (self.port, self.operation)

    def __str__(self) -> str:
        text = f"{self.port}.{self.operation}"
        return f"{text}.{self.parameter}" if self.parameter else text


@dataclass(frozen=True)
class BareInvocation:
    invocation: Invocation
    pos: Pos = _pos()


@dataclass(frozen=True)
class FeedScalar:
    scalar: Literal
    targets: tuple[Invocation, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class FeedVariable:
    var: str
    targets: tuple[Invocation, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Compose:
    """``p1.Op1 -> p2.Op2``: an invocation's output fed straight to others."""

    source: Invocation
    targets: tuple[Invocation, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Retrieve:
    invocation: Invocation
    var: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign:
    var: str
    rhs: Literal | VarRef | TupleExpr
    pos: Pos = _pos()


DataflowStatement = BareInvocation | FeedScalar | FeedVariable | Compose | Retrieve | Assign


@dataclass(frozen=True)
class WorkflowSpec:
    descriptions: tuple[Description, ...] = ()
    services: tuple[ServiceDef, ...] = ()
    ports: tuple[PortDef, ...] = ()
    schemas: tuple[SchemaDef, ...] = ()
    interface: Interface = Interface()
    statements: tuple[DataflowStatement, ...] = ()

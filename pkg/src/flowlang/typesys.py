"""Static types: base types, named complex types and anonymous tuple types."""

from __future__ import annotations

from dataclasses import dataclass

BASE_TYPES = frozenset(
    {"any", "int", "double", "float", "decimal", "byte", "boolean", "string", "long", "short"}
)


@dataclass(frozen=True)
class BaseType:
    name: str

    def __post_init__(self) -> None:
        if self.name not in BASE_TYPES:
            raise ValueError(f"not a base type: {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ComplexType:
    """A named record type ``schema:name``.

    In a parsed workflow ``schema`` is the workflow's schema identifier; after
    resolution it is the id of the loaded schema document.
    """

    schema: str
    name: str

    def __str__(self) -> str:
        return f"{self.schema}:{self.name}"


@dataclass(frozen=True)
class TupleType:
    elements: tuple[TypeExpr, ...]

    def __str__(self) -> str:
        return "(" + ", ".join(str(e) for e in self.elements) + ")"


TypeExpr = BaseType | ComplexType | TupleType

ANY = BaseType("any")
INT = BaseType("int")
DOUBLE = BaseType("double")
BOOLEAN = BaseType("boolean")
STRING = BaseType("string")


def is_any(t: TypeExpr) -> bool:
    return isinstance(t, BaseType) and t.name == "any"


def compatible(a: TypeExpr, b: TypeExpr) -> bool:
    """Symmetric compatibility: ``any`` matches everything, otherwise exact match.

    Complex types match by name, tuples elementwise.
    """
    if is_any(a) or is_any(b):
        return True
    if isinstance(a, TupleType) and isinstance(b, TupleType):
        return len(a.elements) == len(b.elements) and all(
            compatible(x, y) for x, y in zip(a.elements, b.elements)
        )
    return a == b


def parse_type_string(text: str) -> BaseType | ComplexType:
    """Parse the catalog notation: a base keyword or ``schema:type``."""
    text = text.strip()
    if ":" in text:
        schema, _, name = text.partition(":")
        if not schema or not name or ":" in name:
            raise ValueError(f"malformed type {text!r}")
        return ComplexType(schema, name)
    return BaseType(text)


def type_to_json(t: TypeExpr) -> object:
    if isinstance(t, TupleType):
        return {"tuple": [type_to_json(e) for e in t.elements]}
    return str(t)


def type_from_json(obj: object) -> TypeExpr:
    if isinstance(obj, dict):
        return TupleType(tuple(type_from_json(e) for e in obj["tuple"]))
    if not isinstance(obj, str):
        raise ValueError(f"bad type encoding {obj!r}")
    return parse_type_string(obj)

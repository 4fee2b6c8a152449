"""Runtime values and their JSON wire encoding."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

from .typesys import ANY, BaseType, ComplexType, TupleType, TypeExpr, is_any

_INTEGRAL = {"int", "long", "short", "byte"}
_REAL = {"double", "float", "decimal"}


@dataclass(frozen=True)
class Scalar:
    type: str
    value: int | float | bool | str

    def __post_init__(self) -> None:
        ok = (
            (self.type in _INTEGRAL and isinstance(self.value, int) and not isinstance(self.value, bool))
            or (self.type in _REAL and isinstance(self.value, (int, float)) and not isinstance(self.value, bool))
            or (self.type == "boolean" and isinstance(self.value, bool))
            or (self.type == "string" and isinstance(self.value, str))
        )
        if not ok:
            raise ValueError(f"{self.value!r} is not a valid {self.type}")
        if self.type in _REAL:
            object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Blob:
    data: bytes

    def __repr__(self) -> str:
        return f"Blob({len(self.data)} bytes)"


@dataclass(frozen=True)
class TupleValue:
    items: tuple[Value, ...]


@dataclass(frozen=True)
class Record:
    type: ComplexType
    fields: tuple[tuple[str, Value], ...]

    def get(self, name: str) -> Value:
        for key, value in self.fields:
            if key == name:
                return value
        raise KeyError(name)


Value = Scalar | Blob | TupleValue | Record


def type_of(value: Value) -> TypeExpr:
    if isinstance(value, Scalar):
        return BaseType(value.type)
    if isinstance(value, Blob):
        return ANY
    if isinstance(value, TupleValue):
        return TupleType(tuple(type_of(v) for v in value.items))
    return value.type


def conforms(value: Value, t: TypeExpr) -> bool:
    """True when ``value`` may travel on an edge of static type ``t``."""
    if is_any(t):
        return True
    if isinstance(t, BaseType):
        return isinstance(value, Scalar) and value.type == t.name
    if isinstance(t, ComplexType):
        return isinstance(value, Record) and value.type == t
    return (
        isinstance(value, TupleValue)
        and len(value.items) == len(t.elements)
        and all(conforms(v, e) for v, e in zip(value.items, t.elements))
    )


def payload_size(value: Value) -> int:
    """Bytes of payload a value carries; used for traffic accounting."""
    if isinstance(value, Blob):
        return len(value.data)
    if isinstance(value, Scalar):
        if value.type == "string":
            return len(value.value.encode("utf-8"))
        return 1 if value.type in ("boolean", "byte") else 8
    if isinstance(value, TupleValue):
        return sum(payload_size(v) for v in value.items)
    return sum(payload_size(v) for _, v in value.fields)


def to_json(value: Value) -> dict:
    if isinstance(value, Scalar):
        return {"t": value.type, "v": value.value}
    if isinstance(value, Blob):
        return {"t": "blob", "b64": base64.b64encode(value.data).decode("ascii")}
    if isinstance(value, TupleValue):
        return {"t": "tuple", "items": [to_json(v) for v in value.items]}
    return {
        "t": "record",
        "type": str(value.type),
        "fields": [[k, to_json(v)] for k, v in value.fields],
    }


def from_json(obj: dict) -> Value:
    try:
        tag = obj["t"]
        if tag == "blob":
            return Blob(base64.b64decode(obj["b64"]))
        if tag == "tuple":
            return TupleValue(tuple(from_json(v) for v in obj["items"]))
        if tag == "record":
            schema, _, name = obj["type"].partition(":")
            return Record(ComplexType(schema, name), tuple((k, from_json(v)) for k, v in obj["fields"]))
        return Scalar(tag, obj["v"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed value encoding: {obj!r}") from exc


def canonical_bytes(values: dict[str, Value]) -> bytes:
    """Stable serialization of an output map, for byte-level comparison."""
    doc = {k: to_json(v) for k, v in sorted(values.items())}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def from_plain(obj: object, t: TypeExpr) -> Value:
    """Build a value of static type ``t`` from a plain JSON-ish Python object."""
    if isinstance(t, TupleType):
        if not isinstance(obj, (list, tuple)) or len(obj) != len(t.elements):
            raise ValueError(f"expected a {len(t.elements)}-tuple")
        return TupleValue(tuple(from_plain(o, e) for o, e in zip(obj, t.elements)))
    if isinstance(t, ComplexType):
        if not isinstance(obj, dict):
            raise ValueError(f"expected an object for {t}")
        return Record(t, tuple((k, _guess(v)) for k, v in obj.items()))
    if is_any(t):
        if isinstance(obj, (bytes, bytearray)):
            return Blob(bytes(obj))
        return _guess(obj)
    return Scalar(t.name, obj)


def _guess(obj: object) -> Value:
    if isinstance(obj, bool):
        return Scalar("boolean", obj)
    if isinstance(obj, int):
        return Scalar("int", obj)
    if isinstance(obj, float):
        return Scalar("double", obj)
    if isinstance(obj, str):
        return Scalar("string", obj)
    if isinstance(obj, (bytes, bytearray)):
        return Blob(bytes(obj))
    if isinstance(obj, (list, tuple)):
        return TupleValue(tuple(_guess(o) for o in obj))
    raise ValueError(f"cannot convert {obj!r} to a value")


def show(value: Value) -> str:
    """Short human-readable rendering used by mock services."""
    if isinstance(value, Scalar):
        return json.dumps(value.value) if value.type == "string" else repr(value.value)
    if isinstance(value, Blob):
        return f"blob[{len(value.data)}]"
    if isinstance(value, TupleValue):
        return "(" + ", ".join(show(v) for v in value.items) + ")"
    return f"{value.type}{{" + ", ".join(f"{k}={show(v)}" for k, v in value.fields) + "}"

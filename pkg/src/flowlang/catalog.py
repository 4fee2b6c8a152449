"""Service catalogs and type schemas.

A catalog is a JSON document listing services, their ports (endpoints) and
typed operations; it carries the information a compiler would otherwise pull
out of a WSDL description.  A schema document declares flat record types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DuplicateName, FormatError, UnknownOperation, UnknownPort, UnknownService
from .typesys import BaseType, ComplexType, TypeExpr, parse_type_string


@dataclass(frozen=True)
class OperationSig:
    name: str
    inputs: tuple[tuple[str, TypeExpr], ...]
    output: TypeExpr

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.inputs)

    def param_type(self, name: str) -> TypeExpr | None:
        for pname, ptype in self.inputs:
            if pname == name:
                return ptype
        return None


@dataclass(frozen=True)
class PortDesc:
    name: str
    endpoint: str
    operations: tuple[OperationSig, ...]

    def operation(self, name: str) -> OperationSig:
        for op in self.operations:
            if op.name == name:
                return op
        raise UnknownOperation(name)


@dataclass(frozen=True)
class ServiceDesc:
    name: str
    ports: tuple[PortDesc, ...]

    def port(self, name: str) -> PortDesc:
        for port in self.ports:
            if port.name == name:
                return port
        raise UnknownPort(name)


@dataclass(frozen=True)
class ServiceCatalog:
    description: str
    services: tuple[ServiceDesc, ...]

    def service(self, name: str) -> ServiceDesc:
        for svc in self.services:
            if svc.name == name:
                return svc
        raise UnknownService(name)


@dataclass(frozen=True)
class TypeSchema:
    schema: str
    types: tuple[tuple[str, tuple[tuple[str, TypeExpr], ...]], ...]

    def fields(self, type_name: str) -> tuple[tuple[str, TypeExpr], ...] | None:
        for name, fields in self.types:
            if name == type_name:
                return fields
        return None


def lookup_operation(catalog: ServiceCatalog, service: str, port: str, op: str) -> OperationSig:
    return catalog.service(service).port(port).operation(op)


def _decode(document: bytes | str) -> object:
    try:
        text = document.decode("utf-8") if isinstance(document, bytes) else document
        return json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("$", f"not valid JSON: {exc}") from exc


def _require(obj: object, key: str, kind: type, path: str):
    if not isinstance(obj, dict):
        raise FormatError(path, "expected an object")
    if key not in obj:
        raise FormatError(f"{path}.{key}", "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise FormatError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def _name(obj: object, path: str) -> str:
    name = _require(obj, "name", str, path)
    if not name:
        raise FormatError(f"{path}.name", "empty name")
    return name


def _type(text: str, path: str) -> BaseType | ComplexType:
    try:
        return parse_type_string(text)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from exc


def _unique(names: list[str], kind: str) -> None:
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise DuplicateName(kind, name)
        seen.add(name)


def load_catalog(document: bytes | str) -> ServiceCatalog:
    doc = _decode(document)
    desc = _require(doc, "description", str, "$")
    services = []
    for i, svc in enumerate(_require(doc, "services", list, "$")):
        spath = f"$.services[{i}]"
        ports = []
        for j, port in enumerate(_require(svc, "ports", list, spath)):
            ppath = f"{spath}.ports[{j}]"
            endpoint = _require(port, "endpoint", str, ppath)
            if not endpoint:
                raise FormatError(f"{ppath}.endpoint", "empty endpoint")
            ops = []
            for k, op in enumerate(_require(port, "operations", list, ppath)):
                opath = f"{ppath}.operations[{k}]"
                inputs = []
                for m, param in enumerate(_require(op, "inputs", list, opath)):
                    ipath = f"{opath}.inputs[{m}]"
                    inputs.append((_name(param, ipath), _type(_require(param, "type", str, ipath), f"{ipath}.type")))
                _unique([n for n, _ in inputs], "parameter")
                out = _require(op, "output", dict, opath)
                output = _type(_require(out, "type", str, f"{opath}.output"), f"{opath}.output.type")
                ops.append(OperationSig(_name(op, opath), tuple(inputs), output))
            _unique([o.name for o in ops], "operation")
            ports.append(PortDesc(_name(port, ppath), endpoint, tuple(ops)))
        _unique([p.name for p in ports], "port")
        services.append(ServiceDesc(_name(svc, spath), tuple(ports)))
    _unique([s.name for s in services], "service")
    return ServiceCatalog(desc, tuple(services))


def load_schema(document: bytes | str) -> TypeSchema:
    doc = _decode(document)
    schema_id = _require(doc, "schema", str, "$")
    types = []
    for i, entry in enumerate(_require(doc, "types", list, "$")):
        tpath = f"$.types[{i}]"
        fields = []
        for j, fld in enumerate(_require(entry, "fields", list, tpath)):
            fpath = f"{tpath}.fields[{j}]"
            fields.append((_name(fld, fpath), _type(_require(fld, "type", str, fpath), f"{fpath}.type")))
        _unique([n for n, _ in fields], "field")
        types.append((_name(entry, tpath), tuple(fields)))
    _unique([n for n, _ in types], "type")

    declared = {name for name, _ in types}
    for i, (name, fields) in enumerate(types):
        for j, (fname, ftype) in enumerate(fields):
            if not isinstance(ftype, ComplexType):
                continue
            where = f"$.types[{i}].fields[{j}].type"
            if ftype.schema != schema_id or ftype.name not in declared:
                raise FormatError(where, f"type {ftype} does not resolve within schema {schema_id!r}")
            if ftype.name == name:
                raise FormatError(where, "recursive types are not supported")
    _reject_cycles(schema_id, types)
    return TypeSchema(schema_id, tuple(types))


def _reject_cycles(schema_id: str, types: list) -> None:
    refs = {
        name: [t.name for _, t in fields if isinstance(t, ComplexType)] for name, fields in types
    }
    state: dict[str, int] = {}

    def visit(name: str) -> None:
        state[name] = 1
        for dep in refs.get(name, []):
            if state.get(dep) == 1:
                raise FormatError(f"$.types[{name}]", f"recursive type reference via {schema_id}:{dep}")
            if dep not in state:
                visit(dep)
        state[name] = 2

    for name in refs:
        if name not in state:
            visit(name)


@dataclass
class Resolver:
    """Maps ``description``/``schema`` URLs to loaded documents.

    ``table`` maps a URL to a local path (relative to ``base``) or to an
    http(s) URL that is fetched on demand.  ``documents`` holds already
    parsed JSON documents keyed by URL and takes precedence.
    """

    table: Mapping[str, str]
    base: Path = Path(".")
    documents: Mapping[str, object] = field(default_factory=dict)

    def export(self, urls) -> dict[str, object]:
        """The JSON documents behind ``urls``, for shipping to another host."""
        return {url: json.loads(self.fetch(url)) for url in urls}

    @classmethod
    def from_file(cls, path: str | Path) -> Resolver:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise FormatError("$", "resolution table must be an object")
        return cls(data, path.parent)

    def fetch(self, url: str) -> bytes:
        if url in self.documents:
            return json.dumps(self.documents[url]).encode("utf-8")
        target = self.table.get(url, url)
        if target.startswith(("http://", "https://")):
            import httpx

            resp = httpx.get(target, timeout=10.0)
            resp.raise_for_status()
            return resp.content
        path = Path(target)
        if not path.is_absolute():
            path = self.base / path
        return path.read_bytes()

    def catalogs(self, urls) -> dict[str, ServiceCatalog]:
        return {url: load_catalog(self.fetch(url)) for url in urls}

    def schemas(self, urls) -> dict[str, TypeSchema]:
        return {url: load_schema(self.fetch(url)) for url in urls}

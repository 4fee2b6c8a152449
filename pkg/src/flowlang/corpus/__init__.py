"""Golden workflow sources and the fixture catalogs they compile against."""

from __future__ import annotations

from pathlib import Path

from ..catalog import Resolver

HERE = Path(__file__).parent

LISTINGS = ("listing1", "listing5", "listing6", "listing7", "listing8", "listing9", "listing10")


def path(name: str) -> Path:
    return HERE / (name if name.endswith((".dfl", ".json")) else f"{name}.dfl")


def source(name: str) -> str:
    return path(name).read_text(encoding="utf-8")


def resolver() -> Resolver:
    return Resolver.from_file(HERE / "catalogs.json")

"""Messages exchanged between orchestrators."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import FormatError
from ..values import Value, from_json, to_json


@dataclass(frozen=True)
class TokenMsg:
    """One value crossing sites, or a failure report sent to the root.

    ``edge`` is the transfer id from the producing fragment's outbound list.
    """

    run: str
    edge: int
    value: Value | None
    origin: str
    seq: int
    failure: dict | None = None

    def to_json(self) -> dict:
        doc = {"run": self.run, "edge": self.edge, "origin": self.origin, "seq": self.seq}
        if self.value is not None:
            doc["value"] = to_json(self.value)
        if self.failure is not None:
            doc["failure"] = self.failure
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> TokenMsg:
        try:
            value = from_json(doc["value"]) if "value" in doc else None
            if value is None and "failure" not in doc:
                raise KeyError("value")
            return cls(doc["run"], int(doc["edge"]), value, doc.get("origin", ""), int(doc.get("seq", 0)), doc.get("failure"))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("$", f"malformed token: {exc}") from exc

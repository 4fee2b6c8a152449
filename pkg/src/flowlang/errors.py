"""Exception hierarchy shared by the compiler, engine and runtime services."""

from __future__ import annotations


class FlowError(Exception):
    """Base class for every error raised by flowlang."""

    code = "FlowError"


class LexError(FlowError):
    code = "LexError"

    def __init__(self, line: int, column: int, char: str) -> None:
        self.line = line
        self.column = column
        self.char = char
        super().__init__(f"{line}:{column}: unexpected character {char!r}")


class ParseError(FlowError):
    code = "ParseError"

    def __init__(self, line: int, column: int, expected: list[str], found: str) -> None:
        self.line = line
        self.column = column
        self.expected = list(expected)
        self.found = found
        exp = " or ".join(self.expected)
        super().__init__(f"{line}:{column}: expected {exp}, found {found}")


class FormatError(FlowError):
    code = "FormatError"

    def __init__(self, path: str, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class DuplicateName(FlowError):
    code = "DuplicateName"

    def __init__(self, kind: str, name: str) -> None:
        self.kind = kind
        self.name = name
        super().__init__(f"duplicate {kind} name {name!r}")


class LookupFailure(FlowError):
    """A catalog lookup named something that does not exist."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"{self.code}({name})")


class UnknownService(LookupFailure):
    code = "UnknownService"


class UnknownPort(LookupFailure):
    code = "UnknownPort"


class UnknownOperation(LookupFailure):
    code = "UnknownOperation"


class CompileError(FlowError):
    """Raised when analysis produced error diagnostics."""

    code = "CompileError"

    def __init__(self, diagnostics: list) -> None:
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        super().__init__(str(first) if first else "compilation failed")


class CycleError(FlowError):
    code = "CycleError"

    def __init__(self, cycle: list[int], labels: list[str]) -> None:
        self.cycle = list(cycle)
        self.labels = list(labels)
        super().__init__("dataflow cycle: " + " -> ".join(labels + labels[:1]))


class MissingInput(FlowError):
    code = "MissingInput"

    def __init__(self, var: str) -> None:
        self.var = var
        super().__init__(f"missing workflow input {var!r}")


class InputTypeMismatch(FlowError):
    code = "InputTypeMismatch"

    def __init__(self, var: str, expected: str, found: str) -> None:
        self.var = var
        super().__init__(f"input {var!r}: expected {expected}, got {found}")


class InvocationFailed(FlowError):
    code = "InvocationFailed"

    def __init__(self, endpoint: str, operation: str, cause: str) -> None:
        self.endpoint = endpoint
        self.operation = operation
        self.cause = cause
        super().__init__(f"{operation} at {endpoint} failed: {cause}")


class RunFailed(FlowError):
    code = "RunFailed"

    def __init__(self, cause: str, site: str | None = None, node: int | None = None) -> None:
        self.cause = cause
        self.site = site
        self.node = node
        where = f" (site {site})" if site else ""
        super().__init__(f"run failed{where}: {cause}")


class UnknownSiteForPort(FlowError):
    code = "UnknownSiteForPort"

    def __init__(self, port: str, site: str) -> None:
        self.port = port
        self.site = site
        super().__init__(f"port {port!r} placed on undeclared site {site!r}")


class ReassemblyMismatch(FlowError):
    code = "ReassemblyMismatch"


class WrongSite(FlowError):
    code = "WrongSite"


class DuplicateRun(FlowError):
    code = "DuplicateRun"


class UnknownRun(FlowError):
    code = "UnknownRun"


class PayloadTypeMismatch(FlowError):
    code = "PayloadTypeMismatch"


class ServiceError(FlowError):
    code = "ServiceError"

    def __init__(self, status: int, body: str) -> None:
        self.status = status
        self.body = body
        super().__init__(f"service returned {status}: {body[:200]}")


class InvokeTimeout(FlowError):
    code = "Timeout"


class BindError(FlowError):
    code = "BindError"

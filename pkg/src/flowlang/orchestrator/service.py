"""Orchestration service: runs workflow fragments and exchanges tokens with peers.

Each daemon owns one site.  A fragment deployed for a run becomes a
:class:`RunEntry` whose engine state is advanced whenever a local
invocation completes or a token arrives from a peer.  Values produced for
other sites are pushed to them as soon as they exist.  The root site also
plays coordinator: it compiles submitted workflows, partitions them, deploys
the fragments and serves the outputs to the client.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
import uuid
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping
from urllib.parse import parse_qs, urlsplit

import httpx

from ..catalog import Resolver
from ..compiler import compile_source
from ..dag import INPUT, INVOCATION, TUPLE, Node
from ..engine import DONE, Invoker, RunState, assemble_tuple
from ..errors import (
    CompileError,
    DuplicateRun,
    FlowError,
    FormatError,
    InvocationFailed,
    MissingInput,
    PayloadTypeMismatch,
    RunFailed,
    UnknownRun,
    WrongSite,
)
from ..invokers import DirectTransport, HttpInvoker, Transport
from ..partitioner import Fragment, Placement, Site, partition
from ..typesys import TypeExpr
from ..values import Blob, Record, Scalar, TupleValue, Value, conforms, from_json, from_plain, payload_size, to_json, type_of
from .protocol import TokenMsg
from .proxy import Proxy

log = logging.getLogger(__name__)

PENDING = "pending"
RUNNING = "running"
DONE_RUN = "done"
FAILED = "failed"

GRACE_SECONDS = 10.0
GC_SECONDS = 300.0


@dataclass
class RunEntry:
    run_id: str
    fragment: Fragment
    state: RunState
    status: str = PENDING
    sent: set[int] = field(default_factory=set)
    inflight: int = 0
    failure: RunFailed | None = None
    created: float = field(default_factory=time.monotonic)
    finished: float | None = None
    tokens_in: int = 0
    tokens_out: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    duplicates: int = 0
    trace: list[dict] = field(default_factory=list)
    lock: threading.Condition = field(default_factory=threading.Condition)

    @property
    def closed(self) -> bool:
        return self.status in (DONE_RUN, FAILED)


def decode_inputs(graph_inputs: Mapping[str, TypeExpr], raw: Mapping[str, object]) -> dict[str, Value]:
    """Accept wire-encoded values (``{"t": ...}``) or plain JSON typed by the interface."""
    out: dict[str, Value] = {}
    for name, obj in raw.items():
        if isinstance(obj, (Scalar, Blob, TupleValue, Record)):
            out[name] = obj
        elif isinstance(obj, dict) and "t" in obj:
            out[name] = from_json(obj)
        elif name in graph_inputs:
            try:
                out[name] = from_plain(obj, graph_inputs[name])
            except (TypeError, ValueError) as exc:
                raise FormatError(f"$.inputs.{name}", str(exc)) from exc
        else:
            raise FormatError(f"$.inputs.{name}", "not a declared workflow input")
    return out


def _extract(value: Value, slot: int | None) -> Value:
    if slot is None:
        return value
    if not isinstance(value, TupleValue) or slot >= len(value.items):
        raise PayloadTypeMismatch(f"expected a tuple with element {slot}, got {type_of(value)}")
    return value.items[slot]


class Orchestrator:
    """Site-local orchestration service (transport-independent core)."""

    def __init__(
        self,
        site: str,
        invoker: Invoker | None = None,
        url: str = "",
        workers: int = 8,
        grace: float = GRACE_SECONDS,
        gc_after: float = GC_SECONDS,
        resolver: Resolver | None = None,
        transport: Transport | None = None,
        resend: int = 0,
        timeout: float = 30.0,
    ) -> None:
        self.site = site
        self.url = url
        self.proxy = Proxy(site, invoker if invoker is not None else HttpInvoker(timeout=timeout))
        self.grace = grace
        self.gc_after = gc_after
        self.resolver = resolver
        self.transport = transport or DirectTransport()
        self.resend = resend
        self.timeout = timeout
        self._runs: dict[str, RunEntry] = {}
        self._gone: set[str] = set()
        self._buffer: dict[str, list[tuple[float, TokenMsg]]] = defaultdict(list)
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"orch-{site}")
        self._sender = ThreadPoolExecutor(max_workers=8, thread_name_prefix=f"send-{site}")
        self._http = httpx.Client(timeout=timeout, limits=httpx.Limits(max_keepalive_connections=32))
        self._seq = 0
        self._last_sweep = time.monotonic()

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
        self._sender.shutdown(wait=True)
        self._http.close()

    # -- deployment ----------------------------------------------------

    def deploy(self, run_id: str, fragment: Fragment, inputs: Mapping[str, Value] | None = None) -> str:
        """Install a fragment for ``run_id``; returns ``"created"`` or ``"duplicate"``."""
        if fragment.site != self.site:
            raise WrongSite(f"fragment {fragment.fragment_id} is for site {fragment.site}, this is {self.site}")
        self._sweep()
        with self._lock:
            existing = self._runs.get(run_id)
            if existing is not None:
                if existing.fragment.fragment_id == fragment.fragment_id:
                    log.warning("DuplicateRun: fragment %s of run %s deployed twice", fragment.fragment_id, run_id)
                    return "duplicate"
                raise DuplicateRun(f"run {run_id} already holds fragment {existing.fragment.fragment_id}")
            learn = getattr(self.proxy.invoker, "learn", None)
            if learn is not None:
                for n in fragment.nodes:
                    if n.kind == INVOCATION and n.signature is not None:
                        learn(n.endpoint, n.signature)
            entry = RunEntry(run_id, fragment, RunState(fragment.graph(), run_id))
            entry.state.trace = self._tracer(entry)
            needs = {n.var for n in fragment.nodes if n.kind == INPUT}
            missing = needs - set(inputs or {})
            if missing:
                raise MissingInput(sorted(missing)[0])
            entry.state.seed(inputs or {})
            self._runs[run_id] = entry
            buffered = self._buffer.pop(run_id, [])
        for _, msg in buffered:
            try:
                self.deliver(msg)
            except FlowError as exc:
                self._fail(entry, RunFailed(str(exc), self.site))
        self._pump(entry)
        return "created"

    def _tracer(self, entry: RunEntry):
        def sink(rec: dict) -> None:
            rec["site"] = self.site
            entry.trace.append(rec)

        return sink

    # -- tokens --------------------------------------------------------

    def deliver(self, msg: TokenMsg) -> str:
        """Accept a token; returns ``"stored"``, ``"duplicate"`` or ``"buffered"``."""
        self._sweep()
        with self._lock:
            entry = self._runs.get(msg.run)
            if entry is None:
                if msg.run in self._gone or self.grace <= 0:
                    raise UnknownRun(f"run {msg.run} is not known at site {self.site}")
                self._buffer[msg.run].append((time.monotonic(), msg))
                return "buffered"
        if msg.failure is not None:
            f = msg.failure
            self._fail(entry, RunFailed(f.get("cause", "peer failure"), f.get("site", msg.origin), f.get("node")))
            return "stored"
        targets = entry.fragment.inbound_via(msg.edge)
        if not targets:
            raise WrongSite(f"site {self.site} has no inbound transfer {msg.edge}")
        parts = []
        for i in targets:
            v = _extract(msg.value, i.slot)
            if not conforms(v, i.type):
                raise PayloadTypeMismatch(f"edge {i.edge} expects {i.type}, token carries {type_of(v)}")
            parts.append((i, v))
        if not self.proxy.keep(msg.run, msg.edge, msg.value):
            with entry.lock:
                entry.duplicates += 1
            return "duplicate"
        with entry.lock:
            entry.tokens_in += 1
            entry.bytes_in += payload_size(msg.value)
            if entry.closed:
                return "stored"
            if entry.status == PENDING:
                entry.status = RUNNING
            for i, v in parts:
                entry.state.fill(i.dst, i.param, v)
        self._pump(entry)
        return "stored"

    # -- execution -----------------------------------------------------

    def _pump(self, entry: RunEntry) -> None:
        """Start every enabled node and ship every newly available value."""
        sends: list[TokenMsg] = []
        with entry.lock:
            if entry.closed:
                return
            state = entry.state
            while not state.failed:
                ready = state.enabled()
                if not ready:
                    break
                for nid in ready:
                    node = state.graph.node(nid)
                    args = state.start(nid)
                    if entry.status == PENDING:
                        entry.status = RUNNING
                    if node.kind == TUPLE:
                        state.complete(nid, assemble_tuple(args))
                    else:
                        entry.inflight += 1
                        self._pool.submit(self._work, entry, node, args)
            for t in entry.fragment.outbound:
                if t.edge not in entry.sent and t.src in state.values:
                    entry.sent.add(t.edge)
                    value = state.values[t.src]
                    sends.append(TokenMsg(entry.run_id, t.edge, value, self.site, self._next_seq()))
                    entry.tokens_out += 1
                    entry.bytes_out += payload_size(value)
            if (
                not state.failed
                and entry.inflight == 0
                and all(st == DONE for st in state.status.values())
                and len(entry.sent) == len(entry.fragment.outbound)
            ):
                entry.status = DONE_RUN
                entry.finished = time.monotonic()
                entry.lock.notify_all()
        by_edge = {t.edge: t for t in entry.fragment.outbound}
        for msg in sends:
            self._sender.submit(self._send, by_edge[msg.edge].to_url, msg, entry)

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _work(self, entry: RunEntry, node: Node, args: list[tuple[str, Value]]) -> None:
        try:
            value = self.proxy.invoke(entry.run_id, node.endpoint, node.operation, args)
            error = None
        except InvocationFailed as exc:
            value, error = None, exc
        except Exception as exc:  # noqa: BLE001 - any invoker failure fails the node
            value, error = None, InvocationFailed(node.endpoint, node.operation, f"{type(exc).__name__}: {exc}")
        with entry.lock:
            entry.inflight -= 1
            if entry.closed:
                return
            if error is None:
                entry.state.complete(node.id, value)
            else:
                entry.state.fail(node.id, error)
            failure = entry.state.failure
        if failure is not None:
            self._fail(entry, RunFailed(str(failure), self.site, entry.state.failed_node))
        else:
            self._pump(entry)

    def _send(self, url: str, msg: TokenMsg, entry: RunEntry) -> None:
        body = msg.to_json()
        nbytes = payload_size(msg.value) if msg.value is not None else 0
        for _ in range(1 + self.resend):
            self.transport.outbound(url, nbytes)
            try:
                resp = self._http.post(f"{url.rstrip('/')}/runs/{msg.run}/tokens", json=body)
            except httpx.HTTPError as exc:
                self._fail(entry, RunFailed(f"cannot reach {url}: {exc}", self.site), notify=msg.failure is None)
                return
            if resp.status_code >= 400:
                self._fail(entry, RunFailed(f"{url} rejected token {msg.edge}: {resp.text}", self.site), notify=msg.failure is None)
                return

    def _fail(self, entry: RunEntry, error: RunFailed, notify: bool = True) -> None:
        with entry.lock:
            if entry.closed:
                return
            entry.status = FAILED
            entry.failure = error
            entry.finished = time.monotonic()
            entry.lock.notify_all()
        log.info("run %s failed at %s: %s", entry.run_id, self.site, error)
        frag = entry.fragment
        if notify and frag.site != frag.root_site and frag.root_url:
            report = {"cause": error.cause, "site": error.site or self.site, "node": error.node}
            msg = TokenMsg(entry.run_id, -1, None, self.site, self._next_seq(), failure=report)
            self._sender.submit(self._send, frag.root_url, msg, entry)

    # -- queries -------------------------------------------------------

    def entry(self, run_id: str) -> RunEntry:
        with self._lock:
            entry = self._runs.get(run_id)
        if entry is None:
            raise UnknownRun(f"run {run_id} is not known at site {self.site}")
        return entry

    def outputs(self, run_id: str, wait: float = 0.0) -> tuple[str, dict]:
        """``("done", outputs)``, ``("pending", info)``; raises RunFailed."""
        entry = self.entry(run_id)
        with entry.lock:
            if wait > 0:
                entry.lock.wait_for(lambda: entry.closed, timeout=wait)
            if entry.status == FAILED:
                raise entry.failure
            if entry.status == DONE_RUN:
                return DONE_RUN, dict(entry.state.outputs)
            return PENDING, {"status": entry.status, "done_nodes": entry.state.done_count(), "nodes": len(entry.fragment.nodes)}

    def metrics(self, run_id: str) -> dict:
        entry = self.entry(run_id)
        with entry.lock:
            end = entry.finished if entry.finished is not None else time.monotonic()
            doc = {
                "site": self.site,
                "run": run_id,
                "status": entry.status,
                "elapsed_ms": round((end - entry.created) * 1000.0, 3),
                "tokens_in": entry.tokens_in,
                "tokens_out": entry.tokens_out,
                "bytes_in": entry.bytes_in,
                "bytes_out": entry.bytes_out,
                "duplicates": entry.duplicates,
                "trace": list(entry.trace),
            }
        doc["proxy"] = self.proxy.counters(run_id).to_json()
        return doc

    # -- housekeeping ----------------------------------------------------

    def _sweep(self) -> None:
        now = time.monotonic()
        if now - self._last_sweep < 1.0:
            return
        self._last_sweep = now
        with self._lock:
            for run, msgs in list(self._buffer.items()):
                kept = [(t, m) for t, m in msgs if now - t <= self.grace]
                if len(kept) != len(msgs):
                    log.warning("UnknownRun: dropped %d token(s) for run %s after grace window", len(msgs) - len(kept), run)
                if kept:
                    self._buffer[run] = kept
                else:
                    del self._buffer[run]
            stale = [r for r, e in self._runs.items() if e.finished is not None and now - e.finished > self.gc_after]
            for run in stale:
                del self._runs[run]
                self._gone.add(run)
        for run in stale:
            self.proxy.drop(run)

    # -- coordinator -----------------------------------------------------

    def submit(
        self,
        source: str,
        inputs: Mapping[str, object],
        placement: Placement | None = None,
        mode: str = "decentralized",
        documents: Mapping[str, object] | None = None,
        run_id: str | None = None,
    ) -> str:
        """Compile, partition and deploy a workflow rooted at this site."""
        base = self.resolver or Resolver({})
        resolver = Resolver(base.table, base.base, {**base.documents, **(documents or {})})
        compiled = compile_source(source, resolver=resolver)
        graph = compiled.graph
        if mode == "centralized" or placement is None:
            if mode == "decentralized":
                raise FormatError("$.placement", "decentralized mode needs a placement")
            placement = Placement(self.site, (Site(self.site, self.url),), {})
        elif mode != "decentralized":
            raise FormatError("$.mode", f"unknown mode {mode!r}")
        if placement.root != self.site:
            raise WrongSite(f"placement is rooted at {placement.root}, this is {self.site}")
        declared = {n.var: n.type for n in graph.nodes if n.kind == INPUT}
        values = decode_inputs(declared, inputs)
        fragments = partition(graph, placement)
        run_id = run_id or uuid.uuid4().hex
        root = [f for f in fragments if f.site == self.site]
        self.deploy(run_id, root[0], values)
        entry = self.entry(run_id)
        peers = [f for f in fragments if f.site != self.site]
        futures = [self._sender.submit(self._deploy_remote, placement.url(f.site), run_id, f) for f in peers]
        for fut in futures:
            error = fut.result()
            if error is not None:
                self._fail(entry, RunFailed(error, self.site))
        return run_id

    def _deploy_remote(self, url: str, run_id: str, fragment: Fragment) -> str | None:
        try:
            resp = self._http.post(f"{url.rstrip('/')}/runs/{run_id}/fragments", json=fragment.to_json())
        except httpx.HTTPError as exc:
            return f"cannot deploy {fragment.fragment_id} to {url}: {exc}"
        if resp.status_code not in (200, 201):
            return f"{url} refused {fragment.fragment_id}: {resp.text}"
        return None


# -- HTTP front end -------------------------------------------------------

_STATUS = {
    "WrongSite": 409,
    "DuplicateRun": 409,
    "UnknownRun": 404,
    "PayloadTypeMismatch": 422,
    "FormatError": 400,
    "CompileError": 400,
    "MissingInput": 400,
    "InputTypeMismatch": 400,
    "UnknownSiteForPort": 400,
}

_ROUTES = [
    ("POST", re.compile(r"^/runs/([^/]+)/fragments$"), "fragments"),
    ("POST", re.compile(r"^/runs/([^/]+)/tokens$"), "tokens"),
    ("GET", re.compile(r"^/runs/([^/]+)/outputs$"), "outputs"),
    ("GET", re.compile(r"^/runs/([^/]+)/metrics$"), "metrics"),
    ("GET", re.compile(r"^/healthz$"), "healthz"),
    ("POST", re.compile(r"^/workflows$"), "workflows"),
]


def error_body(exc: FlowError) -> dict:
    doc = {"code": exc.code, "message": str(exc)}
    if isinstance(exc, RunFailed):
        doc.update(cause=exc.cause, site=exc.site, node=exc.node)
    if isinstance(exc, CompileError):
        doc["diagnostics"] = [d.as_dict() for d in exc.diagnostics]
    return {"error": doc}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    server: _Server

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        self._consumed = True
        try:
            doc = json.loads(raw)
        except ValueError as exc:
            raise FormatError("$", f"body is not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise FormatError("$", "body must be a JSON object")
        return doc

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        for verb, pattern, name in _ROUTES:
            m = pattern.match(parts.path)
            if m and verb == method:
                try:
                    status, doc = getattr(self, f"_do_{name}")(*m.groups(), query=parse_qs(parts.query))
                except FlowError as exc:
                    if method == "POST":
                        self._drain()
                    self._reply(_STATUS.get(exc.code, 500 if not isinstance(exc, RunFailed) else 410), error_body(exc))
                    return
                except Exception as exc:  # noqa: BLE001 - report, keep serving
                    log.exception("internal error on %s %s", method, parts.path)
                    self._reply(500, {"error": {"code": "Internal", "message": str(exc)}})
                    return
                self._reply(status, doc)
                return
        if method == "POST":
            self._drain()
        self._reply(404, {"error": {"code": "NotFound", "message": parts.path}})

    def _drain(self) -> None:
        if not getattr(self, "_consumed", False):
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                self.rfile.read(length)
            self._consumed = True

    def do_GET(self) -> None:  # noqa: N802
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._consumed = False
        self._dispatch("POST")

    # -- endpoints -----------------------------------------------------

    def _read(self) -> dict:
        return self._body()

    def _do_fragments(self, run: str, query) -> tuple[int, dict]:
        doc = self._read()
        fragment = Fragment.from_json(doc)
        raw = doc.get("inputs") or {}
        inputs = {k: from_json(v) for k, v in raw.items()}
        result = self.server.orchestrator.deploy(run, fragment, inputs)
        if result == "duplicate":
            return 200, {"run": run, "status": "duplicate", "warning": "DuplicateRun"}
        return 201, {"run": run, "status": PENDING}

    def _do_tokens(self, run: str, query) -> tuple[int, dict]:
        doc = self._read()
        doc.setdefault("run", run)
        if doc["run"] != run:
            raise FormatError("$.run", "run id does not match the URL")
        return 202, {"run": run, "status": self.server.orchestrator.deliver(TokenMsg.from_json(doc))}

    def _do_outputs(self, run: str, query) -> tuple[int, dict]:
        wait = float(query.get("wait", ["0"])[0])
        status, doc = self.server.orchestrator.outputs(run, wait=min(wait, 60.0))
        if status == DONE_RUN:
            return 200, {"run": run, "status": DONE_RUN, "outputs": {k: to_json(v) for k, v in sorted(doc.items())}}
        return 202, {"run": run, **doc}

    def _do_metrics(self, run: str, query) -> tuple[int, dict]:
        return 200, self.server.orchestrator.metrics(run)

    def _do_healthz(self, query) -> tuple[int, dict]:
        return 200, {"status": "ok", "site": self.server.orchestrator.site}

    def _do_workflows(self, query) -> tuple[int, dict]:
        doc = self._read()
        if "source" not in doc:
            raise FormatError("$.source", "missing workflow source")
        placement = Placement.from_json(doc["placement"]) if doc.get("placement") else None
        run_id = self.server.orchestrator.submit(
            doc["source"],
            doc.get("inputs") or {},
            placement,
            doc.get("mode", "decentralized" if placement else "centralized"),
            doc.get("catalogs") or {},
            doc.get("run_id"),
        )
        return 201, {"run_id": run_id}


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128

    def __init__(self, address: tuple[str, int], orchestrator: Orchestrator) -> None:
        self.orchestrator = orchestrator
        super().__init__(address, _Handler)


class OrchestratorServer:
    """An orchestrator bound to a socket and served from a background thread."""

    def __init__(self, orchestrator: Orchestrator, host: str = "127.0.0.1", port: int = 0) -> None:
        self.orchestrator = orchestrator
        self._server = _Server((host, port), orchestrator)
        self.host, self.port = self._server.server_address[:2]
        if not orchestrator.url:
            orchestrator.url = self.url
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> OrchestratorServer:
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, name=f"http-{self.orchestrator.site}", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self.orchestrator.close()

    def __enter__(self) -> OrchestratorServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

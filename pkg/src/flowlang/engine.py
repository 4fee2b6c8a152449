"""Data-driven execution of a dataflow graph.

A node fires once every input slot holds a value.  Its result is copied
along each out-edge, which may enable further nodes.  With one worker the
run is sequential and always fires the lowest enabled node id first; with
more workers invocations overlap, and single assignment makes the final
outputs independent of the interleaving.
"""

from __future__ import annotations

import logging
import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

from .dag import CONST, INPUT, INVOCATION, OUTPUT, TUPLE, DataflowGraph, Slot
from .errors import FlowError, InputTypeMismatch, InvocationFailed, MissingInput, RunFailed
from .values import TupleValue, Value, conforms, payload_size, type_of

log = logging.getLogger(__name__)

BLOCKED = "blocked"
ENABLED = "enabled"
RUNNING = "running"
DONE = "done"
FAILED = "failed"

DEFAULT_TIMEOUT = 30.0

TraceSink = Callable[[dict], None]


class Invoker(Protocol):
    def invoke(self, endpoint: str, operation: str, args: list[tuple[str, Value]]) -> Value: ...


class SlotAlreadyFilled(FlowError):
    code = "SlotAlreadyFilled"


@dataclass
class RunDelta:
    """What one state transition changed."""

    node: int
    value: Value | None = None
    enabled: list[int] = field(default_factory=list)
    outputs: dict[str, Value] = field(default_factory=dict)
    error: FlowError | None = None


class RunState:
    """Slots, statuses and bound outputs of one run over one graph.

    Owned by a single coordinator; not thread-safe.
    """

    def __init__(
        self,
        graph: DataflowGraph,
        run_id: str = "run",
        trace: TraceSink | None = None,
        on_output: Callable[[str, Value], None] | None = None,
    ) -> None:
        self.graph = graph
        self.run_id = run_id
        self.trace = trace
        self.on_output = on_output
        self.slots: dict[int, dict[Slot, Value]] = {n.id: {} for n in graph.nodes}
        self.status: dict[int, str] = {n.id: BLOCKED for n in graph.nodes}
        self.values: dict[int, Value] = {}
        self.outputs: dict[str, Value] = {}
        self.fired: list[int] = []
        self.failure: FlowError | None = None
        self.failed_node: int | None = None
        self._t0 = time.monotonic()
        for n in graph.nodes:
            if n.kind in (INVOCATION, TUPLE) and not n.slots:
                self.status[n.id] = ENABLED

    # -- tracing -------------------------------------------------------

    def _emit(self, event: str, node: int, **extra) -> None:
        if self.trace is not None:
            rec = {"event": event, "node": node, "t_ms": round((time.monotonic() - self._t0) * 1000.0, 3)}
            rec.update(extra)
            self.trace(rec)

    # -- queries -------------------------------------------------------

    def enabled(self) -> list[int]:
        return sorted(nid for nid, st in self.status.items() if st == ENABLED)

    def running(self) -> list[int]:
        return sorted(nid for nid, st in self.status.items() if st == RUNNING)

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def done_count(self) -> int:
        return sum(1 for st in self.status.values() if st == DONE)

    def finished(self) -> bool:
        """Every output bound and nothing left to fire or wait for."""
        return (
            not self.failed
            and all(n.var in self.outputs for n in self.graph.nodes if n.kind == OUTPUT)
            and not any(st in (ENABLED, RUNNING) for st in self.status.values())
        )

    def check_invariants(self) -> None:
        """Exhaustive scan: enabled is exactly the set of blocked-but-full nodes."""
        for n in self.graph.nodes:
            st = self.status[n.id]
            full = set(self.slots[n.id]) == set(n.slots)
            if n.kind in (INVOCATION, TUPLE):
                if st == ENABLED:
                    assert full, f"node {n.id} enabled with empty slots"
                if st == BLOCKED:
                    assert not full or self.failed, f"node {n.id} full but not enabled"

    # -- transitions ---------------------------------------------------

    def seed(self, inputs: Mapping[str, Value]) -> RunDelta:
        """Mark Input and Const nodes done and propagate their values."""
        delta = RunDelta(node=-1)
        for n in self.graph.nodes:
            if n.kind == INPUT:
                if n.var not in inputs:
                    raise MissingInput(n.var)
                value = inputs[n.var]
                if not conforms(value, n.type):
                    raise InputTypeMismatch(n.var, str(n.type), str(type_of(value)))
                self._finish(n.id, value, delta)
            elif n.kind == CONST:
                self._finish(n.id, n.value, delta)
        return delta

    def fill(self, node_id: int, slot: Slot, value: Value, delta: RunDelta | None = None) -> RunDelta:
        delta = delta if delta is not None else RunDelta(node=node_id)
        slots = self.slots[node_id]
        if slot in slots or self.status[node_id] == DONE:
            raise SlotAlreadyFilled(f"node {node_id} slot {slot!r} written twice")
        slots[slot] = value
        node = self.graph.node(node_id)
        if node.kind == OUTPUT:
            self.status[node_id] = DONE
            self.values[node_id] = value
            self.outputs[node.var] = value
            delta.outputs[node.var] = value
            if self.on_output is not None:
                self.on_output(node.var, value)
        elif len(slots) == len(node.slots) and self.status[node_id] == BLOCKED and not self.failed:
            self.status[node_id] = ENABLED
            delta.enabled.append(node_id)
        return delta

    def start(self, node_id: int) -> list[tuple[str, Value]]:
        """Move an enabled node to running and return its ordered arguments."""
        if self.status[node_id] != ENABLED:
            raise ValueError(f"node {node_id} is {self.status[node_id]}, not enabled")
        self.status[node_id] = RUNNING
        node = self.graph.node(node_id)
        args = [(s, self.slots[node_id][s]) for s in node.slots]
        self._emit("fire", node_id, bytes_in=sum(payload_size(v) for _, v in args))
        return args

    def complete(self, node_id: int, value: Value) -> RunDelta:
        if self.status[node_id] != RUNNING:
            raise ValueError(f"node {node_id} is {self.status[node_id]}, not running")
        node = self.graph.node(node_id)
        if node.kind == INVOCATION and not conforms(value, node.type):
            return self.fail(
                node_id,
                InvocationFailed(node.endpoint, node.operation, f"result of type {type_of(value)}, declared {node.type}"),
            )
        self.fired.append(node_id)
        self._emit("done", node_id, bytes_out=payload_size(value))
        delta = RunDelta(node=node_id, value=value)
        self._finish(node_id, value, delta)
        return delta

    def fail(self, node_id: int, error: FlowError) -> RunDelta:
        self.status[node_id] = FAILED
        if self.failure is None:
            self.failure = error
            self.failed_node = node_id
        self._emit("fail", node_id, error=str(error))
        for nid, st in self.status.items():
            if st == ENABLED:
                self.status[nid] = BLOCKED
        return RunDelta(node=node_id, error=error)

    def _finish(self, node_id: int, value: Value, delta: RunDelta) -> None:
        self.status[node_id] = DONE
        self.values[node_id] = value
        for e in self.graph.out_edges(node_id):
            v = value if e.src_slot is None else value.items[e.src_slot]
            self.fill(e.dst, e.dst_param, v, delta)


def assemble_tuple(args: list[tuple[Slot, Value]]) -> TupleValue:
    return TupleValue(tuple(v for _, v in args))


def new_run(
    graph: DataflowGraph,
    inputs: Mapping[str, Value],
    run_id: str = "run",
    trace: TraceSink | None = None,
    on_output: Callable[[str, Value], None] | None = None,
) -> RunState:
    run = RunState(graph, run_id, trace, on_output)
    run.seed(inputs)
    return run


def _call(invoker: Invoker, node, args) -> Value:
    try:
        return invoker.invoke(node.endpoint, node.operation, list(args))
    except InvocationFailed:
        raise
    except Exception as exc:  # noqa: BLE001 - any invoker failure fails the node
        raise InvocationFailed(node.endpoint, node.operation, f"{type(exc).__name__}: {exc}") from exc


def fire(run: RunState, node_id: int, invoker: Invoker) -> RunDelta:
    """Fire one enabled node synchronously."""
    node = run.graph.node(node_id)
    args = run.start(node_id)
    if node.kind == TUPLE:
        return run.complete(node_id, assemble_tuple(args))
    try:
        value = _call(invoker, node, args)
    except InvocationFailed as exc:
        return run.fail(node_id, exc)
    return run.complete(node_id, value)


def run_to_completion(
    graph: DataflowGraph,
    inputs: Mapping[str, Value],
    invoker: Invoker,
    workers: int = 1,
    timeout: float = DEFAULT_TIMEOUT,
    run_id: str = "run",
    trace: TraceSink | None = None,
    on_output: Callable[[str, Value], None] | None = None,
) -> dict[str, Value]:
    """Run the graph until no node can fire and return the bound outputs."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    run = new_run(graph, inputs, run_id, trace, on_output)
    drive(run, invoker, workers, timeout)
    return dict(run.outputs)


def drive(run: RunState, invoker: Invoker, workers: int = 1, timeout: float = DEFAULT_TIMEOUT) -> RunState:
    """Coordinator loop: start enabled nodes, apply completions in arrival order."""
    completions: queue.Queue = queue.Queue()
    deadlines: dict[int, float] = {}
    pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"run-{run.run_id}")

    def work(node, args) -> None:
        try:
            completions.put((node.id, _call(invoker, node, args), None))
        except InvocationFailed as exc:
            completions.put((node.id, None, exc))

    try:
        while not run.failed:
            while len(deadlines) < workers:
                ready = run.enabled()
                if not ready:
                    break
                node = run.graph.node(ready[0])
                args = run.start(node.id)
                if node.kind == TUPLE:
                    run.complete(node.id, assemble_tuple(args))
                    continue
                deadlines[node.id] = time.monotonic() + timeout
                pool.submit(work, node, args)
            if not deadlines:
                break
            wait = max(0.0, min(deadlines.values()) - time.monotonic())
            try:
                node_id, value, error = completions.get(timeout=wait)
            except queue.Empty:
                late = min(deadlines, key=deadlines.get)
                node = run.graph.node(late)
                run.fail(late, InvocationFailed(node.endpoint, node.operation, f"timed out after {timeout} s"))
                break
            del deadlines[node_id]
            if error is not None:
                run.fail(node_id, error)
            else:
                run.complete(node_id, value)
    finally:
        pool.shutdown(wait=False, cancel_futures=True)

    if run.failed:
        raise RunFailed(str(run.failure), node=run.failed_node)
    assert run.finished(), "stalled: outputs unbound with nothing enabled"
    return run

"""``flow``: compile, inspect, run and benchmark dataflow workflows.

Exit codes: 0 success, 1 workflow or runtime failure, 2 I/O error,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Sequence

from . import corpus
from .analyzer import ERROR
from .catalog import Resolver, load_catalog
from .compiler import Compiled, diagnose, load_documents
from .dag import INPUT, literal_value, to_dot
from .engine import run_to_completion
from .errors import FlowError, LexError, ParseError
from .invokers import EchoInvoker, HttpInvoker
from .partitioner import Placement, partition
from .syntax.lexer import TokenKind, tokenize
from .syntax.parser import Parser
from .typesys import TypeExpr, is_any
from .values import Blob, Scalar, Value, to_json

log = logging.getLogger("flowlang")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- helpers --------------------------------------------------------------


def _resolver(args) -> Resolver:
    if args.catalogs:
        return Resolver.from_file(args.catalogs)
    return corpus.resolver()


def _read_source(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit_diagnostics(diags, path: str) -> None:
    for d in diags:
        doc = d.as_dict()
        doc["file"] = path
        print(json.dumps(doc), file=sys.stderr)


def _compile(args) -> Compiled | int:
    """Compile ``args.spec``; on failure print diagnostics and return an exit code."""
    try:
        source = _read_source(args.spec)
        compiled, diags = diagnose(source, resolver=_resolver(args))
    except OSError as exc:
        print(json.dumps({"severity": "error", "code": "IOError", "msg": str(exc)}), file=sys.stderr)
        return EXIT_IO
    except FlowError as exc:
        print(json.dumps({"severity": "error", "code": exc.code, "msg": str(exc)}), file=sys.stderr)
        return EXIT_FAIL
    if compiled is None:
        _emit_diagnostics(diags, args.spec)
        return EXIT_FAIL
    if args.log_level.upper() == "DEBUG" or getattr(args, "command", "") == "check":
        _emit_diagnostics([d for d in diags if d.severity != ERROR], args.spec)
    return compiled


def parse_input(text: str, declared: TypeExpr) -> Value:
    """Turn a command-line value into a value of the declared type.

    ``@path`` reads a file: as a blob for ``any`` inputs, as text otherwise.
    Other values follow the literal syntax of the language; unquoted text
    is accepted for string and ``any`` inputs.
    """
    if text.startswith("@"):
        data = Path(text[1:]).read_bytes()
        if is_any(declared):
            return Blob(data)
        text = data.decode("utf-8").strip()
    literal = None
    try:
        toks = tokenize(text)
        if len(toks) == 2 and toks[0].kind is TokenKind.SCALAR:
            literal = literal_value(Parser(toks).literal())
    except (LexError, ParseError):
        literal = None
    name = "any" if is_any(declared) else getattr(declared, "name", None)
    if name == "any":
        return literal if literal is not None else Scalar("string", text)
    if name == "string":
        return literal if literal is not None and literal.type == "string" else Scalar("string", text)
    if literal is None:
        raise UsageError(f"cannot read {text!r} as {declared}")
    if name in ("double", "float", "decimal") and literal.type == "int":
        return Scalar(name, float(literal.value))
    if literal.type != name and not (literal.type == "int" and name in ("long", "short", "byte")):
        raise UsageError(f"cannot read {text!r} as {declared}")
    return Scalar(name, literal.value)


def _inputs(compiled: Compiled, pairs: Sequence[str]) -> dict[str, Value]:
    declared = {n.var: n.type for n in compiled.graph.nodes if n.kind == INPUT}
    out: dict[str, Value] = {}
    for pair in pairs:
        name, sep, text = pair.partition("=")
        if not sep:
            raise UsageError(f"input {pair!r} is not of the form name=value")
        if name not in declared:
            raise UsageError(f"{name!r} is not an input of this workflow")
        out[name] = parse_input(text, declared[name])
    missing = sorted(set(declared) - set(out))
    if missing:
        raise UsageError(f"missing input(s): {', '.join(missing)}")
    return out


def outputs_json(outputs: dict[str, Value]) -> str:
    return json.dumps({k: to_json(v) for k, v in sorted(outputs.items())}, sort_keys=True)


def _echo_for(resolver: Resolver, compiled: Compiled | None = None) -> EchoInvoker:
    inv = EchoInvoker()
    if compiled is not None:
        catalogs, _ = load_documents(compiled.spec, resolver)
        for cat in catalogs.values():
            inv.register(cat)
        return inv
    docs = dict(resolver.documents)
    for url in resolver.table:
        try:
            docs[url] = json.loads(resolver.fetch(url))
        except (OSError, ValueError):
            continue
    for doc in docs.values():
        try:
            inv.register(load_catalog(json.dumps(doc)))
        except FlowError:
            continue  # schema documents and the like
    return inv


def _fail(args, exc: BaseException, code: int = EXIT_FAIL) -> int:
    doc = {"error": getattr(exc, "code", type(exc).__name__), "message": str(exc)}
    for attr in ("site", "node"):
        if getattr(exc, attr, None) is not None:
            doc[attr] = getattr(exc, attr)
    print(json.dumps(doc) if args.json else f"error: {doc['error']}: {doc['message']}", file=sys.stderr)
    return code


# -- commands -------------------------------------------------------------


def cmd_check(args) -> int:
    result = _compile(args)
    if isinstance(result, int):
        return result
    if args.json:
        print(json.dumps({"file": args.spec, "ok": True, "nodes": len(result.graph.nodes), "edges": len(result.graph.edges)}))
    return EXIT_OK


def cmd_graph(args) -> int:
    result = _compile(args)
    if isinstance(result, int):
        return result
    text = to_dot(result.graph, Path(args.spec).stem) if args.format == "dot" else json.dumps(result.graph.to_json(), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    if args.mode == "decentralized" and not args.placement:
        raise UsageError("--mode decentralized requires --placement")
    result = _compile(args)
    if isinstance(result, int):
        return result
    inputs = _inputs(result, args.input or [])
    try:
        if args.mode == "local":
            resolver = _resolver(args)
            invoker = _echo_for(resolver, result) if args.mock else HttpInvoker(timeout=args.timeout)
            trace_file = open(args.trace, "w", encoding="utf-8") if args.trace else None
            try:
                sink = (lambda rec: trace_file.write(json.dumps(rec) + "\n")) if trace_file else None
                outputs = run_to_completion(result.graph, inputs, invoker, workers=args.workers, timeout=args.timeout, trace=sink)
            finally:
                if trace_file:
                    trace_file.close()
        else:
            outputs = _run_remote(args, result, inputs)
    except FlowError as exc:
        return _fail(args, exc)
    except (OSError, TimeoutError) as exc:
        return _fail(args, exc, EXIT_FAIL)
    print(outputs_json(outputs))
    return EXIT_OK


def _run_remote(args, compiled: Compiled, inputs: dict[str, Value]) -> dict[str, Value]:
    from .orchestrator import OrchestratorClient

    placement = Placement.load(args.placement) if args.placement else None
    url = args.orchestrator or (placement.url(placement.root) if placement else None)
    if not url:
        raise UsageError(f"--mode {args.mode} requires --orchestrator (or a placement with a root URL)")
    resolver = _resolver(args)
    urls = sorted({d.url for d in compiled.spec.descriptions} | {s.url for s in compiled.spec.schemas})
    documents = resolver.export(urls)
    with OrchestratorClient(url, timeout=args.timeout) as client:
        return client.run(
            _read_source(args.spec),
            inputs,
            placement if args.mode == "decentralized" else None,
            args.mode,
            documents,
            timeout=args.timeout,
        )


def cmd_partition(args) -> int:
    result = _compile(args)
    if isinstance(result, int):
        return result
    try:
        placement = Placement.load(args.placement)
        fragments = partition(result.graph, placement)
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)
    except FlowError as exc:
        return _fail(args, exc)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for frag in fragments:
        path = out / f"{frag.fragment_id}.json"
        path.write_text(json.dumps(frag.to_json(), indent=2) + "\n", encoding="utf-8")
        written.append(str(path))
    if args.json:
        print(json.dumps({"fragments": written}))
    else:
        print("\n".join(written))
    return EXIT_OK


def _block_until_signal(stop) -> None:
    done = threading.Event()

    def handler(signum, frame) -> None:
        done.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    done.wait()
    stop()


def cmd_serve(args) -> int:
    from .orchestrator import Orchestrator, OrchestratorServer

    resolver = _resolver(args)
    invoker = _echo_for(resolver) if args.mock else HttpInvoker(timeout=args.timeout)
    orch = Orchestrator(
        args.site,
        invoker,
        url=args.url or "",
        workers=args.workers,
        grace=args.grace,
        resolver=resolver,
        timeout=args.timeout,
    )
    try:
        server = OrchestratorServer(orch, args.host, args.port).start()
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)
    print(json.dumps({"site": args.site, "url": server.url}), flush=True)
    _block_until_signal(server.stop)
    return EXIT_OK


def cmd_testsvc(args) -> int:
    from .testbed.services import TestServiceSpec, run_test_service

    try:
        spec = TestServiceSpec(args.name, args.behavior, args.delay_ms, args.host, args.port, args.jitter)
        svc = run_test_service(spec)
    except FlowError as exc:
        return _fail(args, exc)
    print(json.dumps({"service": args.name, "behavior": args.behavior, "url": svc.url}), flush=True)
    _block_until_signal(svc.stop)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .testbed.experiment import ExperimentConfig, MetricsReport, run_experiment
    from .testbed.network import MB, Link, NetModel
    from .testbed.report import emit_report
    from .testbed.workflows import PATTERNS

    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)
    except FlowError as exc:
        return _fail(args, exc)
    overrides: dict = {}
    if args.modes:
        overrides["modes"] = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    if args.repeats is not None:
        overrides["repetitions"] = args.repeats
    if args.input_bytes is not None:
        overrides["input_bytes"] = args.input_bytes
    if args.clock:
        overrides["clock"] = args.clock
    if args.compute_delay_ms is not None:
        overrides["compute_delay_ms"] = args.compute_delay_ms
    if args.latency_ms is not None or args.bandwidth_mbps is not None:
        d = config.net.default
        overrides["net"] = NetModel(
            Link(
                args.latency_ms if args.latency_ms is not None else d.latency_ms,
                args.bandwidth_mbps * MB if args.bandwidth_mbps is not None else d.bandwidth,
            ),
            config.net.links,
        )
    patterns = PATTERNS if args.pattern == "all" else (args.pattern or config.pattern,)
    report = MetricsReport()
    try:
        for p in patterns:
            report = report.extend(run_experiment(p, config=config, **overrides))
    except FlowError as exc:
        return _fail(args, exc, EXIT_USAGE if exc.code == "FormatError" else EXIT_FAIL)
    fmt = args.format or ("json" if args.out and args.out.endswith(".json") else "csv")
    text = emit_report(report, fmt, args.out)
    if not args.out:
        sys.stdout.write(text)
    summary = {
        p: {
            "centralized_mean_ms": report.mean(p, "centralized"),
            "decentralized_mean_ms": report.mean(p, "decentralized"),
            "speedup": report.speedup(p),
        }
        for p in report.patterns()
    }
    if args.out:
        print(json.dumps(summary) if args.json else "\n".join(
            f"{p}: speedup {s['speedup']:.3f}" if s["speedup"] else f"{p}: (single mode)" for p, s in summary.items()
        ))
    if not report.valid:
        print(f"error: experiment aborted: {report.error}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# -- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def globals_(defaults: bool) -> argparse.ArgumentParser:
        # global flags are accepted before or after the subcommand
        g = _Parser(add_help=False)
        kw = {} if defaults else {"default": argparse.SUPPRESS}
        g.add_argument("--catalogs", metavar="TABLE", help="JSON table mapping description/schema URLs to files", **({"default": None} if defaults else kw))
        g.add_argument("--log-level", help="logging level (default WARNING)", **({"default": "WARNING"} if defaults else kw))
        g.add_argument("--json", action="store_true", help="machine-readable output", **kw)
        return g

    common = globals_(False)
    parser = _Parser(prog="flow", description="Typed dataflow workflows: compile, run and benchmark.", parents=[globals_(True)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", parents=[common], help="parse, resolve and type-check a workflow")
    p.add_argument("spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("graph", parents=[common], help="export the dataflow graph")
    p.add_argument("spec")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("run", parents=[common], help="execute a workflow")
    p.add_argument("spec")
    p.add_argument("--mode", choices=("local", "centralized", "decentralized"), default="local")
    p.add_argument("--placement", help="placement JSON (decentralized mode)")
    p.add_argument("--orchestrator", help="root orchestrator URL")
    p.add_argument("--input", "-i", action="append", metavar="NAME=VALUE", help="workflow input; NAME=@file reads a file")
    p.add_argument("--mock", action="store_true", help="use the deterministic echo invoker (local mode)")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--trace", help="write the JSON-lines trace here (local mode)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("partition", parents=[common], help="write per-site fragment files")
    p.add_argument("spec")
    p.add_argument("--placement", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("serve", parents=[common], help="run an orchestration service")
    p.add_argument("--site", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--url", help="externally visible URL (default http://host:port)")
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--grace", type=float, default=10.0, help="seconds to buffer tokens for undeployed runs")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--mock", action="store_true", help="answer invocations with the echo invoker")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("testsvc", parents=[common], help="run a synthetic test service")
    p.add_argument("--name", default="T1")
    p.add_argument("--behavior", choices=("double", "same-size", "aggregate-double"), default="double")
    p.add_argument("--delay-ms", type=float, default=5.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_testsvc)

    p = sub.add_parser("bench", parents=[common], help="centralized vs decentralized experiments")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--pattern", choices=("pipeline", "aggregation", "distribution", "all"))
    p.add_argument("--modes", help="comma-separated: centralized,decentralized")
    p.add_argument("--repeats", type=int)
    p.add_argument("--input-bytes", type=int)
    p.add_argument("--latency-ms", type=float)
    p.add_argument("--bandwidth-mbps", type=float, help="inter-site bandwidth in MB/s")
    p.add_argument("--compute-delay-ms", type=float)
    p.add_argument("--clock", choices=("virtual", "real"))
    p.add_argument("--out", help="report path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"flow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        return _fail(args, exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())

"""CSV/JSON rendering of experiment reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .experiment import CENTRALIZED, DECENTRALIZED, MetricsReport

COLUMNS = (
    "kind",
    "pattern",
    "mode",
    "repetition",
    "makespan_ms",
    "bytes_total",
    "bytes_through_root",
    "centralized_mean_ms",
    "centralized_std_ms",
    "decentralized_mean_ms",
    "decentralized_std_ms",
    "centralized_root_bytes",
    "decentralized_root_bytes",
    "speedup",
)
_INT = {"repetition", "bytes_total", "bytes_through_root"}
_STR = {"kind", "pattern", "mode"}


def report_rows(report: MetricsReport) -> list[dict]:
    """One ``data`` row per repetition, then one ``aggregate`` row per pattern."""
    blank = dict.fromkeys(COLUMNS)
    rows = []
    for r in report.rows:
        rows.append(
            {
                **blank,
                "kind": "data",
                "pattern": r.pattern,
                "mode": r.mode,
                "repetition": r.repetition,
                "makespan_ms": float(r.makespan_ms),
                "bytes_total": r.bytes_total,
                "bytes_through_root": r.bytes_through_root,
            }
        )
    for p in report.patterns():
        rows.append(
            {
                **blank,
                "kind": "aggregate",
                "pattern": p,
                "mode": "+".join(report.modes(p)),
                "centralized_mean_ms": report.mean(p, CENTRALIZED),
                "centralized_std_ms": report.std(p, CENTRALIZED),
                "decentralized_mean_ms": report.mean(p, DECENTRALIZED),
                "decentralized_std_ms": report.std(p, DECENTRALIZED),
                "centralized_root_bytes": report.root_bytes(p, CENTRALIZED),
                "decentralized_root_bytes": report.root_bytes(p, DECENTRALIZED),
                "speedup": report.speedup(p),
            }
        )
    return rows


def emit_report(report: MetricsReport, fmt: str = "csv", path: str | Path | None = None) -> str:
    """Render ``report`` as CSV or JSON; also write it to ``path`` when given."""
    rows = report_rows(report)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        doc = {"columns": list(COLUMNS), "valid": report.valid, "error": report.error, "rows": rows}
        text = json.dumps(doc, indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _typed(column: str, cell: str):
    if cell == "":
        return None
    if column in _STR:
        return cell
    if column in _INT:
        return int(cell)
    return float(cell)


def parse_report(text: str, fmt: str) -> list[dict]:
    """Rows of a rendered report, with numeric columns typed."""
    if fmt == "json":
        return [{c: row.get(c) for c in COLUMNS} for row in json.loads(text)["rows"]]
    reader = csv.DictReader(io.StringIO(text))
    return [{c: _typed(c, row[c]) for c in COLUMNS} for row in reader]

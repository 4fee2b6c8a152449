from __future__ import annotations

import json
import random
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlang.errors import BindError, FormatError
from flowlang.invokers import HttpInvoker
from flowlang.testbed import (
    CENTRALIZED,
    DECENTRALIZED,
    ExperimentConfig,
    Link,
    MetricsReport,
    NetModel,
    Repetition,
    ShapedTransport,
    TestServiceSpec,
    VirtualNetwork,
    emit_report,
    parse_report,
    run_experiment,
)
from flowlang.testbed.network import MB
from flowlang.testbed.services import output_size, respond, run_test_service
from flowlang.values import Blob

KiB = 1024
MiB = 1024 * KiB
PATTERNS = ("pipeline", "aggregation", "distribution")

# Bytes through the root as multiples of the input size s, from counting the
# messages of each configuration by hand.
#   pipeline:     centralized s+2s+2s+4s+4s+8s+8s+16s, decentralized s in + 16s out
#   aggregation:  centralized 3s out, 3s back, 3s tuple out, 6s back; decentralized 3s + 6s
#   distribution: centralized s, s, 3s, 3s; decentralized s in + 3s out
ROOT_FACTORS = {
    "pipeline": (45, 17),
    "aggregation": (15, 9),
    "distribution": (8, 4),
}


# -- link model ---------------------------------------------------------------


def test_transfer_time_formula():
    net = NetModel()
    assert net.transfer_time("R", "S1", MB) == pytest.approx(120.0)
    assert net.transfer_time("R", "S1", 0) == 20.0
    assert net.transfer_time("S1", "S1", 1000 * MB) == 0.0


def test_per_pair_links_override_the_default():
    net = NetModel(Link(5, MB), {("A", "B"): Link(50, 2 * MB)})
    assert net.transfer_time("A", "B", 2 * MB) == pytest.approx(1050.0)
    assert net.transfer_time("B", "A", MB) == pytest.approx(1005.0)
    assert NetModel.from_json(net.to_json()) == net
    with pytest.raises(FormatError):
        Link(-1, MB)


def test_virtual_links_are_fifo():
    vn = VirtualNetwork(NetModel(Link(10, MB)))
    first = vn.send(0.0, "A", "B", MB)  # 1000 ms on the wire
    second = vn.send(0.0, "A", "B", 0)
    other_direction = vn.send(0.0, "B", "A", 0)
    assert first == pytest.approx(1010.0)
    assert second == pytest.approx(1010.0)  # waits for the link, then latency
    assert other_direction == pytest.approx(10.0)
    assert vn.link_bytes[("A", "B")] == MB and vn.messages[("A", "B")] == 2


def test_shaped_transport_sleeps_and_counts():
    slept = []
    t = ShapedTransport(NetModel(), "A", {"http://b": "B"}.get, sleep=slept.append)
    t.outbound("http://b", MB)
    t.inbound("http://b", 0)
    t.outbound("http://unknown", MB)
    assert slept == [pytest.approx(0.12), pytest.approx(0.02)]
    assert dict(t.link_bytes) == {("A", "B"): MB, ("B", "A"): 0}


# -- live test services ------------------------------------------------------------


def _call(spec: TestServiceSpec, blobs: list[bytes]) -> Blob:
    with run_test_service(spec) as svc:
        inv = HttpInvoker(timeout=10)
        try:
            return inv.invoke(svc.url, "Run", [(f"a{i}", Blob(b)) for i, b in enumerate(blobs)])
        finally:
            inv.close()


def test_double_service():
    out = _call(TestServiceSpec("T1", "double", 0.0), [b"x" * MiB])
    assert len(out.data) == 2 * MiB


def test_aggregate_double_service():
    out = _call(TestServiceSpec("T4", "aggregate-double", 0.0), [b"a" * KiB, b"b" * 2 * KiB, b"c" * 3 * KiB])
    assert len(out.data) == 12 * KiB


def test_same_size_service_with_jitter():
    out = _call(TestServiceSpec("T2", "same-size", 0.0, jitter=0.01), [b"x" * MiB])
    assert 0.99 * MiB <= len(out.data) <= 1.01 * MiB


@given(st.integers(0, 10 * MiB), st.integers(0, 1000))
def test_same_size_rule_stays_within_one_percent(n, seed):
    size = output_size("same-size", [n], random.Random(seed), 0.01)
    assert abs(size - n) <= 0.01 * n + 1


def test_respond_is_deterministic_in_size():
    spec = TestServiceSpec("T", "double", 0.0)
    assert len(respond(spec, [Blob(b"")]).data) == 0
    assert len(respond(spec, [Blob(b"abc")]).data) == 6


def test_bind_error():
    with socket.socket() as held:
        held.bind(("127.0.0.1", 0))
        held.listen()
        port = held.getsockname()[1]
        with pytest.raises(BindError):
            run_test_service(TestServiceSpec("T", "double", 0.0, port=port))


def test_spec_validation():
    with pytest.raises(FormatError):
        TestServiceSpec("T", "triple")
    with pytest.raises(FormatError):
        TestServiceSpec("T", "same-size", jitter=0.5)


# -- experiments -------------------------------------------------------------------


@pytest.mark.parametrize("pattern", PATTERNS)
def test_bytes_through_root_match_hand_count(pattern):
    s = 256 * KiB
    report = run_experiment(pattern, repetitions=1, input_bytes=s)
    cen, dec = ROOT_FACTORS[pattern]
    assert report.root_bytes(pattern, CENTRALIZED) == cen * s
    assert report.root_bytes(pattern, DECENTRALIZED) == dec * s


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(PATTERNS), st.integers(KiB, 4 * MiB))
def test_decentralized_moves_less_through_root(pattern, s):
    report = run_experiment(pattern, repetitions=1, input_bytes=s)
    cen, dec = ROOT_FACTORS[pattern]
    assert report.root_bytes(pattern, DECENTRALIZED) == dec * s < cen * s == report.root_bytes(pattern, CENTRALIZED)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(PATTERNS), st.floats(0.1, 100.0), st.floats(0.0, 80.0))
def test_decentralized_is_never_slower(pattern, bandwidth_mb, latency):
    report = run_experiment(pattern, repetitions=1, net=NetModel(Link(latency, bandwidth_mb * MB)))
    assert report.mean(pattern, DECENTRALIZED) <= report.mean(pattern, CENTRALIZED)


def test_doubling_input_doubles_pipeline_root_traffic():
    small = run_experiment("pipeline", repetitions=1, input_bytes=64 * KiB)
    large = run_experiment("pipeline", repetitions=1, input_bytes=128 * KiB)
    assert large.root_bytes("pipeline", CENTRALIZED) >= 2 * small.root_bytes("pipeline", CENTRALIZED)


def test_virtual_clock_is_deterministic():
    a = run_experiment("aggregation", repetitions=5, seed=7)
    b = run_experiment("aggregation", repetitions=5, seed=7)
    assert a == b
    assert a.std("aggregation", CENTRALIZED) == 0.0


def test_speedup_is_ratio_of_means():
    rows = [
        Repetition("p", CENTRALIZED, 0, 30.0, 0, 0),
        Repetition("p", CENTRALIZED, 1, 50.0, 0, 0),
        Repetition("p", DECENTRALIZED, 0, 10.0, 0, 0),
        Repetition("p", DECENTRALIZED, 1, 30.0, 0, 0),
    ]
    assert MetricsReport(rows).speedup("p") == pytest.approx(40.0 / 20.0)
    assert MetricsReport(rows[:2]).speedup("p") is None


def test_pipeline_bandwidth_trend_depends_on_compute_delay():
    """The pipeline speedup only grows as bandwidth shrinks once compute time is large enough.

    Centralized, the pipeline makes 8 link crossings carrying 45s bytes.
    Decentralized, it makes 5 crossings carrying 31s. With per-call delay d
    and latency L, the speedup is (8L + 4d + 45s/B) / (5L + 4d + 31s/B).
    As B falls this moves toward 45/31. It rises only when
    45(5L + 4d) > 31(8L + 4d), that is when d > 23L/56, which is about
    8.2 ms at L = 20 ms.
    """
    latency = 20.0
    threshold = 23 * latency / 56

    def sweep(delay):
        return [
            run_experiment("pipeline", repetitions=1, compute_delay_ms=delay, net=NetModel(Link(latency, bw * MB))).speedup("pipeline")
            for bw in (100, 10, 1)
        ]

    below, above = sweep(threshold - 1.0), sweep(threshold + 1.0)
    assert below[0] > below[1] > below[2]
    assert above[0] < above[1] < above[2]


def test_failed_experiment_is_flagged(monkeypatch):
    from flowlang.testbed import experiment as exp

    def boom(config, mode):
        yield Repetition(config.pattern, mode, 0, 1.0, 0, 0)
        raise RuntimeError("service down")

    monkeypatch.setattr(exp, "_run_virtual", boom)
    report = exp.run_experiment("pipeline", repetitions=2)
    assert not report.valid and "service down" in report.error
    assert len(report.rows) == 1


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig("distribution", repetitions=3, input_bytes=1000, net=NetModel(Link(5, MB)), seed=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_json()))
    again = ExperimentConfig.load(path)
    assert again.to_json() == cfg.to_json()
    with pytest.raises(FormatError):
        ExperimentConfig("fan-in")


@pytest.mark.slow
def test_real_clock_smoke():
    s = 16 * KiB
    net = NetModel(Link(1.0, 100 * MB))
    report = run_experiment("pipeline", repetitions=1, input_bytes=s, clock="real", net=net, compute_delay_ms=1.0)
    assert report.valid, report.error
    assert report.root_bytes("pipeline", CENTRALIZED) == 45 * s
    assert report.root_bytes("pipeline", DECENTRALIZED) == 17 * s


# -- reports -------------------------------------------------------------------------


def test_report_rows_and_formats(tmp_path):
    report = run_experiment("pipeline", repetitions=20)
    csv_text = emit_report(report, "csv", tmp_path / "r.csv")
    json_text = emit_report(report, "json")
    assert (tmp_path / "r.csv").read_text() == csv_text
    rows = parse_report(csv_text, "csv")
    assert sum(r["kind"] == "data" for r in rows) == 40
    assert sum(r["kind"] == "aggregate" for r in rows) == 1
    assert rows == parse_report(json_text, "json")
    agg = rows[-1]
    assert agg["speedup"] == report.speedup("pipeline")
    assert list(rows[0])[:7] == ["kind", "pattern", "mode", "repetition", "makespan_ms", "bytes_total", "bytes_through_root"]


def test_empty_report_is_header_only():
    text = emit_report(MetricsReport(), "csv")
    assert text.strip().count("\n") == 0 and text.startswith("kind,pattern,mode,repetition")
    assert parse_report(text, "csv") == []
    assert json.loads(emit_report(MetricsReport(), "json"))["rows"] == []

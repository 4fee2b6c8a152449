from __future__ import annotations

import time

import httpx
import pytest

from flowlang import corpus
from flowlang.engine import run_to_completion
from flowlang.errors import CompileError, RunFailed, UnknownRun
from flowlang.invokers import FailingInvoker, HttpInvoker
from flowlang.orchestrator import ApiError, Orchestrator, OrchestratorClient, ProxyStore, TokenMsg
from flowlang.partitioner import Placement, partition
from flowlang.values import Scalar

from .conftest import echo_for, start_cluster

A = {"a": Scalar("int", 3)}
SPLIT = {"p3": "B", "p4": "B", "p5": "B", "p6": "C"}


@pytest.fixture
def cluster(listing1):
    with start_cluster(("A", "B", "C"), lambda site: echo_for(listing1), resolver=corpus.resolver()) as c:
        yield c


@pytest.fixture
def client(cluster):
    with OrchestratorClient(cluster.urls["A"], timeout=10) as c:
        yield c


def fragments(cluster, listing1):
    return {f.site: f for f in partition(listing1.graph, cluster.placement("A", SPLIT))}


def test_health(cluster):
    with OrchestratorClient(cluster.urls["B"]) as c:
        assert c.health() == {"status": "ok", "site": "B"}


def test_decentralized_run_matches_local_and_stays_local(cluster, client, listing1):
    expected = run_to_completion(listing1.graph, A, echo_for(listing1))
    run = client.submit(corpus.source("listing1"), {"a": 3}, cluster.placement("A", SPLIT))
    assert client.outputs(run, timeout=10) == expected
    ops = {
        site: sorted(op for _, op in o.proxy.counters(run).invocations) for site, o in cluster.orchestrators.items()
    }
    assert ops == {"A": ["Op1", "Op2"], "B": ["Op3", "Op4", "Op5"], "C": ["Op6"]}
    with OrchestratorClient(cluster.urls["B"]) as b:
        metrics = b.metrics(run)
    assert metrics["tokens_in"] == 1 and metrics["tokens_out"] == 3
    assert metrics["status"] == "done"


def test_centralized_run(cluster, client, listing1):
    run = client.submit(corpus.source("listing1"), {"a": 3}, mode="centralized")
    assert client.outputs(run, timeout=10) == run_to_completion(listing1.graph, A, echo_for(listing1))
    calls = {site: len(o.proxy.counters(run).invocations) for site, o in cluster.orchestrators.items()}
    assert calls == {"A": 6, "B": 0, "C": 0}


def test_compile_errors_are_reported(client):
    with pytest.raises(CompileError) as info:
        client.submit(corpus.source("listing1").replace("a -> p1.Op1", "a -> p1.Op9"), {"a": 3})
    (diag,) = info.value.diagnostics
    assert (diag.code, diag.line, diag.column) == ("UnknownOperation", 20, 6)


def test_deploy_status_codes(cluster, listing1):
    frags = fragments(cluster, listing1)
    with OrchestratorClient(cluster.urls["B"]) as b:
        with pytest.raises(ApiError) as info:
            b.deploy("r1", frags["C"])
        assert info.value.status == 409 and info.value.code == "WrongSite"
        assert b.deploy("r1", frags["B"])["status"] == "pending"
        again = b.deploy("r1", frags["B"])
        assert again["status"] == "duplicate" and again["warning"] == "DuplicateRun"
    raw = httpx.post(f"{cluster.urls['B']}/runs/r1/fragments", json=frags["B"].to_json())
    assert raw.status_code == 200
    with OrchestratorClient(cluster.urls["A"]) as a:
        with pytest.raises(ApiError) as info:
            a.deploy("r2", frags["A"])  # root fragment needs its inputs
        assert info.value.status == 400 and info.value.code == "MissingInput"


def test_token_status_codes(cluster, listing1):
    frags = fragments(cluster, listing1)
    with OrchestratorClient(cluster.urls["B"]) as b:
        b.deploy("r1", frags["B"])
        with pytest.raises(ApiError) as info:
            b.send_token(TokenMsg("r1", 2, Scalar("int", 1), "A", 1))
        assert info.value.status == 422 and info.value.code == "PayloadTypeMismatch"
        with pytest.raises(ApiError) as info:
            b.send_token(TokenMsg("r1", 99, Scalar("string", "v"), "A", 1))
        assert info.value.status == 409
        with pytest.raises(ApiError) as info:
            b.poll("never-deployed")
        assert info.value.status == 404 and info.value.code == "UnknownRun"
    bad = httpx.post(f"{cluster.urls['B']}/runs/r1/tokens", content=b"{not json", headers={"Content-Type": "application/json"})
    assert bad.status_code == 400 and bad.json()["error"]["code"] == "FormatError"
    assert httpx.get(f"{cluster.urls['B']}/nowhere").status_code == 404


def test_early_tokens_are_buffered_and_duplicates_ignored(cluster, listing1):
    """Deploy in reverse order: every token reaches its site before the fragment does."""
    frags = fragments(cluster, listing1)
    x = Scalar("string", "Op2(Op1(3))")
    b = OrchestratorClient(cluster.urls["B"])
    c = OrchestratorClient(cluster.urls["C"])
    a = OrchestratorClient(cluster.urls["A"])
    try:
        assert b.send_token(TokenMsg("early", 2, x, "A", 1))["status"] == "buffered"
        c.deploy("early", frags["C"])
        b.deploy("early", frags["B"])
        # C finishes and tries to return y and z to A, which buffers them
        deadline = time.monotonic() + 5
        while c.poll("early")[0] != "done" and time.monotonic() < deadline:
            time.sleep(0.01)
        a.deploy("early", frags["A"], A)
        out = a.outputs("early", timeout=10)
        assert out == run_to_completion(listing1.graph, A, echo_for(listing1))
        # A's own copy of x reached B after the buffered one
        assert b.metrics("early")["duplicates"] == 1
    finally:
        for cl in (a, b, c):
            cl.close()


def test_duplicated_tokens_change_nothing(listing1):
    with start_cluster(("A", "B", "C"), lambda s: echo_for(listing1), resolver=corpus.resolver(), resend=1) as cl:
        with OrchestratorClient(cl.urls["A"]) as client:
            run = client.submit(corpus.source("listing1"), {"a": 3}, cl.placement("A", SPLIT))
            out = client.outputs(run, timeout=10)
            assert out == run_to_completion(listing1.graph, A, echo_for(listing1))
            time.sleep(0.1)
            assert client.metrics(run)["duplicates"] == 2  # y and z each arrived twice
            # each service was still called exactly once
            total = sum(len(o.proxy.counters(run).invocations) for o in cl.orchestrators.values())
            assert total == 6


def test_remote_failure_is_reported_by_the_root(listing1):
    def invoker(site):
        echo = echo_for(listing1)
        return FailingInvoker(echo, {"Op4"}) if site == "B" else echo

    with start_cluster(("A", "B", "C"), invoker, resolver=corpus.resolver()) as cl:
        with OrchestratorClient(cl.urls["A"]) as client:
            run = client.submit(corpus.source("listing1"), {"a": 3}, cl.placement("A", SPLIT))
            with pytest.raises(RunFailed) as info:
                client.outputs(run, timeout=10)
            assert info.value.site == "B"
            assert "Op4" in info.value.cause
            raw = httpx.get(f"{cl.urls['A']}/runs/{run}/outputs")
            assert raw.status_code == 410


def test_dead_service_endpoint_fails_the_run():
    catalog = {
        "description": "dead",
        "services": [{"name": "S", "ports": [{"name": "P", "endpoint": "http://127.0.0.1:9", "operations": [
            {"name": "Op", "inputs": [{"name": "a", "type": "int"}], "output": {"type": "int"}}]}]}],
    }
    source = (
        "description d is http://dead.invalid/catalog.json\nservice s is d.S\nport p is s.P\n\n"
        "input:\n   int a\noutput:\n   int r\n\na -> p.Op\np.Op -> r\n"
    )
    with start_cluster(("A",), lambda s: HttpInvoker(timeout=1.0)) as cl:
        with OrchestratorClient(cl.urls["A"]) as client:
            t0 = time.monotonic()
            run = client.submit(source, {"a": 1}, catalogs={"http://dead.invalid/catalog.json": catalog})
            with pytest.raises(RunFailed):
                client.outputs(run, timeout=10)
            assert time.monotonic() - t0 < 5


def test_unknown_run_without_grace(listing1):
    orch = Orchestrator("B", echo_for(listing1), grace=0)
    try:
        with pytest.raises(UnknownRun):
            orch.deliver(TokenMsg("nope", 2, Scalar("string", "x"), "A", 1))
    finally:
        orch.close()


def test_finished_runs_are_collected(listing1):
    orch = Orchestrator("A", echo_for(listing1), gc_after=0)
    try:
        (frag,) = partition(listing1.graph, Placement.single("A"))
        orch.deploy("r", frag, A)
        assert orch.outputs("r", wait=5)[0] == "done"
        orch._last_sweep = 0.0
        orch._sweep()
        with pytest.raises(UnknownRun):
            orch.outputs("r")
        with pytest.raises(UnknownRun):
            orch.deliver(TokenMsg("r", 0, Scalar("int", 1), "B", 1))
    finally:
        orch.close()


def test_proxy_store_is_write_once():
    store = ProxyStore()
    assert store.put("r", 1, Scalar("int", 1))
    assert not store.put("r", 1, Scalar("int", 2))
    assert store.get("r", 1) == Scalar("int", 1)
    assert ("r", 1) in store
    store.drop("r")
    assert ("r", 1) not in store


def test_token_wire_format():
    msg = TokenMsg("r", 3, Scalar("string", "v"), "B", 7)
    assert TokenMsg.from_json(msg.to_json()) == msg
    fail = TokenMsg("r", -1, None, "B", 8, failure={"cause": "x", "site": "B", "node": 4})
    assert TokenMsg.from_json(fail.to_json()) == fail

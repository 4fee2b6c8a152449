"""Client for the orchestrator HTTP API."""

from __future__ import annotations

import time
from typing import Mapping

import httpx

from ..analyzer import Diagnostic
from ..errors import CompileError, FlowError, RunFailed
from ..partitioner import Fragment, Placement
from ..values import Value, from_json, to_json
from .protocol import TokenMsg


class ApiError(FlowError):
    code = "ApiError"

    def __init__(self, status: int, doc: dict) -> None:
        self.status = status
        self.error = doc.get("error", {}) if isinstance(doc, dict) else {}
        self.code = self.error.get("code", "ApiError")
        super().__init__(f"HTTP {status}: {self.error.get('message', doc)}")


def _check(resp: httpx.Response) -> dict:
    try:
        doc = resp.json()
    except ValueError:
        doc = {"error": {"message": resp.text}}
    if resp.status_code >= 400:
        if resp.status_code == 410:
            err = doc.get("error", {})
            raise RunFailed(err.get("cause", err.get("message", "")), err.get("site"), err.get("node"))
        raise ApiError(resp.status_code, doc)
    return doc


class OrchestratorClient:
    def __init__(self, base_url: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self._http = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> OrchestratorClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def health(self) -> dict:
        return _check(self._http.get(f"{self.base_url}/healthz"))

    def deploy(self, run: str, fragment: Fragment, inputs: Mapping[str, Value] | None = None) -> dict:
        body = fragment.to_json()
        if inputs:
            body["inputs"] = {k: to_json(v) for k, v in inputs.items()}
        return _check(self._http.post(f"{self.base_url}/runs/{run}/fragments", json=body))

    def send_token(self, msg: TokenMsg) -> dict:
        return _check(self._http.post(f"{self.base_url}/runs/{msg.run}/tokens", json=msg.to_json()))

    def poll(self, run: str, wait: float = 0.0) -> tuple[str, dict]:
        """One outputs request: ``("done", outputs)`` or ``("pending", info)``."""
        resp = self._http.get(
            f"{self.base_url}/runs/{run}/outputs",
            params={"wait": wait} if wait else None,
            timeout=wait + 30.0,
        )
        doc = _check(resp)
        if resp.status_code == 200:
            return "done", {k: from_json(v) for k, v in doc["outputs"].items()}
        return "pending", doc

    def outputs(self, run: str, timeout: float = 60.0) -> dict[str, Value]:
        deadline = time.monotonic() + timeout
        while True:
            left = deadline - time.monotonic()
            if left <= 0:
                raise TimeoutError(f"run {run} still pending after {timeout} s")
            status, doc = self.poll(run, wait=min(left, 5.0))
            if status == "done":
                return doc

    def metrics(self, run: str) -> dict:
        return _check(self._http.get(f"{self.base_url}/runs/{run}/metrics"))

    def submit(
        self,
        source: str,
        inputs: Mapping[str, object],
        placement: Placement | None = None,
        mode: str | None = None,
        catalogs: Mapping[str, object] | None = None,
    ) -> str:
        body: dict = {
            "source": source,
            "inputs": {k: to_json(v) if not isinstance(v, (str, int, float, bool, list, dict)) else v for k, v in inputs.items()},
            "mode": mode or ("decentralized" if placement else "centralized"),
        }
        if placement is not None:
            body["placement"] = placement.to_json()
        if catalogs:
            body["catalogs"] = dict(catalogs)
        resp = self._http.post(f"{self.base_url}/workflows", json=body)
        if resp.status_code == 400:
            doc = resp.json().get("error", {})
            if doc.get("code") == "CompileError":
                raise CompileError(
                    [Diagnostic(d["severity"], d["code"], d["msg"], d["line"], d["col"]) for d in doc.get("diagnostics", [])]
                )
        return _check(resp)["run_id"]

    def run(self, source: str, inputs: Mapping[str, object], placement: Placement | None = None,
            mode: str | None = None, catalogs: Mapping[str, object] | None = None, timeout: float = 60.0) -> dict[str, Value]:
        run = self.submit(source, inputs, placement, mode, catalogs)
        return self.outputs(run, timeout)

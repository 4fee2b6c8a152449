"""Orchestration services, their proxies and an HTTP client."""

from __future__ import annotations

from .client import ApiError, OrchestratorClient
from .protocol import TokenMsg
from .proxy import Proxy, ProxyStore
from .service import Orchestrator, OrchestratorServer

__all__ = ["ApiError", "Orchestrator", "OrchestratorClient", "OrchestratorServer", "Proxy", "ProxyStore", "TokenMsg"]

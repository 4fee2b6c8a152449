"""Synthetic services, link model and the centralized/decentralized experiments."""

from __future__ import annotations

from .experiment import CENTRALIZED, DECENTRALIZED, ExperimentConfig, MetricsReport, Repetition, run_experiment
from .network import Link, NetModel, ShapedTransport, VirtualNetwork
from .report import emit_report, parse_report
from .services import TestService, TestServiceSpec, run_test_service
from .workflows import AGGREGATION, DISTRIBUTION, PATTERNS, PIPELINE

__all__ = [
    "AGGREGATION",
    "CENTRALIZED",
    "DECENTRALIZED",
    "DISTRIBUTION",
    "PATTERNS",
    "PIPELINE",
    "ExperimentConfig",
    "Link",
    "MetricsReport",
    "NetModel",
    "Repetition",
    "ShapedTransport",
    "TestService",
    "TestServiceSpec",
    "VirtualNetwork",
    "emit_report",
    "parse_report",
    "run_experiment",
]

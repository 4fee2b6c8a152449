"""A typed dataflow language for service workflows, with local and
decentralised execution."""

from __future__ import annotations

from .compiler import Compiled, compile_source, diagnose
from .engine import run_to_completion
from .partitioner import Placement, partition

__all__ = ["Compiled", "Placement", "compile_source", "diagnose", "partition", "run_to_completion"]
__version__ = "0.1.0"

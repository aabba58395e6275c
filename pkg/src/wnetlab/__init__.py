"""Desk-scale wireless network test bench.

One YAML scenario is expanded into a graph, a link-event log, routing and
traffic, then run on a deterministic packet emulator that reports latency,
throughput, jitter, loss and per-node resource samples.
"""
from importlib import resources
from pathlib import Path

from .config import ConcreteScenario, ScenarioSpec, dump, expand, load, parse
from .dists import DistSpec, parse_dist, sample, substream
from .emucore import Emulator, RunTrace
from .linkevents import EventLog, generate_events, parse_eel, serialize_eel
from .orchestrator import (compile_external, estimate_cost, plan_deployment, prepare,
                           run_scenario)
from .routing import RoutingPlane, centralized_compute, spf
from .traffic import compute_jitter, summarize

__version__ = "0.1.0"


def sample_path(name: str = "sample30.yaml") -> Path:
    """Path of a bundled scenario file."""
    return Path(str(resources.files(__package__) / "data" / name))


__all__ = [
    "ConcreteScenario", "DistSpec", "Emulator", "EventLog", "RoutingPlane", "RunTrace",
    "ScenarioSpec", "centralized_compute", "compile_external", "compute_jitter", "dump",
    "estimate_cost", "expand", "generate_events", "load", "parse", "parse_dist", "parse_eel",
    "plan_deployment", "prepare", "run_scenario", "sample", "sample_path", "serialize_eel",
    "spf", "substream", "summarize",
]

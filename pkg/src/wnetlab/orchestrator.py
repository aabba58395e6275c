"""End-to-end pipeline, deployment planning, cost estimation and artifact bundles.

``run_scenario`` drives parse -> expand -> event generation -> emulation ->
summary -> export. ``compile_external`` renders what real emulation tools
would consume (per-node NEM documents, routing stubs, layered image recipes
and an event log) without running anything.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from . import config as cfg
from .emucore import Emulator, RunTrace, mac_for_link
from .linkevents import EventLog, generate_events, import_precomputed, serialize_eel
from .routing import RoutingPlane
from .topology import data_address, mgmt_address
from .traffic import TrafficSummary, make_app, summarize, summary_csv, summary_json

# name -> (nodes per worker host, fixed overhead hosts)
HOST_MODELS: dict[str, tuple[int, int]] = {
    "vm-per-core": (24, 0),
    "container-per-core": (24, 0),
    "container-dense": (88, 0),
    "private-cloud": (24, 6),
}
DEFAULT_HOST_MODEL = "container-dense"

# Published cloud bootstrap times (VM-based vs containerized), kept for context.
REFERENCE_BOOTSTRAP_S = {"vm": 123.0, "container": 29.0}

log = logging.getLogger(__name__)


class StageError(Exception):
    """A failure in one pipeline stage; ``cause`` keeps the typed original."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage={stage}: {cause}")
        self.stage = stage
        self.cause = cause


# ----------------------------------------------------------------- planning


@dataclass(frozen=True)
class DeploymentPlan:
    n_nodes: int
    host_model: str
    hosts: int
    capacity: int
    overhead: int
    placement: tuple[int, ...]

    @property
    def worker_hosts(self) -> int:
        return self.hosts - self.overhead

    def load(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for h in self.placement:
            out[h] = out.get(h, 0) + 1
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes, "host_model": self.host_model, "hosts": self.hosts,
            "capacity_per_host": self.capacity, "overhead_hosts": self.overhead,
            "placement": {str(n): h for n, h in enumerate(self.placement)},
        }


def plan_deployment(n_nodes: int, host_model: str = DEFAULT_HOST_MODEL) -> DeploymentPlan:
    """Fewest hosts for ``n_nodes`` under ``host_model``; nodes placed round-robin.

    Overhead hosts (controllers, storage) come first and carry no nodes.
    """
    if host_model not in HOST_MODELS:
        raise ValueError(f"unknown host model {host_model!r}; "
                         f"choose from {', '.join(HOST_MODELS)}")
    if isinstance(n_nodes, bool) or int(n_nodes) != n_nodes or n_nodes < 1:
        raise ValueError("n_nodes must be an integer >= 1")
    n_nodes = int(n_nodes)
    capacity, overhead = HOST_MODELS[host_model]
    workers = -(-n_nodes // capacity)
    placement = tuple(overhead + i % workers for i in range(n_nodes))
    return DeploymentPlan(n_nodes, host_model, overhead + workers, capacity, overhead,
                          placement)


# --------------------------------------------------------------------- cost


@dataclass(frozen=True)
class Pricing:
    """``environment`` is ``in-house`` (buy servers) or ``cloud`` (rent them)."""

    environment: str = "in-house"
    unit_cost: float = 10_000.0
    hourly_rate: float = 24.67
    management_per_host_month: float = 100.0
    hours_per_month: float = 730.0

    def __post_init__(self):
        if self.environment not in ("in-house", "cloud"):
            raise ValueError("environment must be 'in-house' or 'cloud'")
        for name in ("unit_cost", "hourly_rate", "management_per_host_month",
                     "hours_per_month"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a non-negative number")


@dataclass(frozen=True)
class CostEstimate:
    host_model: str
    environment: str
    hosts: int
    horizon_months: float
    capex: float
    opex: float

    @property
    def total(self) -> float:
        return self.capex + self.opex

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


DEFAULT_HORIZON_MONTHS = 24.0


def estimate_cost(plan: DeploymentPlan, pricing: Pricing = Pricing(),
                  horizon_months: float | None = None,
                  horizon_hours: float | None = None) -> CostEstimate:
    """Capital and operating cost of running ``plan`` for the horizon.

    In-house: servers are bought up front (capex) and managed monthly (opex).
    Cloud: every host is rented by the hour, plus the same management fee.
    ``horizon_hours`` overrides the month count for short horizons.
    """
    if horizon_hours is not None:
        hours = float(horizon_hours)
        months = hours / pricing.hours_per_month if pricing.hours_per_month else 0.0
    else:
        months = DEFAULT_HORIZON_MONTHS if horizon_months is None else float(horizon_months)
        hours = months * pricing.hours_per_month
    if hours < 0 or months < 0:
        raise ValueError("horizon must be non-negative")
    management = plan.hosts * pricing.management_per_host_month * months
    if pricing.environment == "in-house":
        capex, opex = plan.hosts * pricing.unit_cost, management
    else:
        capex, opex = 0.0, plan.hosts * pricing.hourly_rate * hours + management
    return CostEstimate(plan.host_model, pricing.environment, plan.hosts, months,
                        float(capex), float(opex))


def parse_range(text: str) -> list[int]:
    """``start:stop:step`` (inclusive stop) or a comma list of integers."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] < 1):
            raise ValueError(f"bad range {text!r}")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p.strip()]


def sweep(nodes, models, pricings=(Pricing("in-house"), Pricing("cloud")),
          horizon_months: float | None = None) -> tuple[list[dict], list[dict]]:
    """Host counts and costs for every (n, model); returns (hosts rows, cost rows)."""
    host_rows, cost_rows = [], []
    for n in nodes:
        row: dict = {"n_nodes": n}
        for m in models:
            plan = plan_deployment(n, m)
            row[m] = plan.hosts
            for p in pricings:
                c = estimate_cost(plan, p, horizon_months)
                cost_rows.append({"n_nodes": n, "host_model": m, "environment": p.environment,
                                  "hosts": plan.hosts, "capex": c.capex, "opex": c.opex,
                                  "total": c.total})
        host_rows.append(row)
    return host_rows, cost_rows


# ---------------------------------------------------------------- artifacts


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class ArtifactBundle:
    """Bundle-relative path -> file bytes, including ``manifest.json``."""

    files: Mapping[str, bytes]

    @property
    def manifest(self) -> dict:
        return json.loads(self.files["manifest.json"])

    @property
    def manifest_hash(self) -> str:
        return _sha(self.files["manifest.json"])

    def verify(self) -> bool:
        m = self.manifest["files"]
        return set(m) == set(self.files) - {"manifest.json"} and all(
            _sha(self.files[p]) == h for p, h in m.items())

    def write(self, root: str | Path) -> Path:
        root = Path(root)
        for rel, data in sorted(self.files.items()):
            target = root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return root


def _fmt(x: float) -> str:
    return repr(float(x))


def nem_document(scenario: cfg.ConcreteScenario, node: int) -> bytes:
    """Transport capabilities, one MAC section per output port, PHY per input link."""
    net = scenario.network
    root = ET.Element("nem", {"id": str(node), "address": data_address(node),
                              "mgmt-address": mgmt_address(node)})
    ET.SubElement(root, "transport",
                  {"capabilities": " ".join(sorted(scenario.spec.topology.transport))})
    macs = ET.SubElement(root, "mac")
    for link in net.out_links(node):
        model = mac_for_link(link)
        attrs = {"port": str(link.id), "peer": str(link.dst),
                 "model": {"RfPipe": "rf-pipe", "Csma": "csma", "Tdma": "tdma"}[
                     type(model).__name__],
                 "datarate": _fmt(model.datarate), "queue-limit": str(model.queue_limit),
                 "prop-delay": _fmt(link.params.prop_delay)}
        if attrs["model"] == "rf-pipe":
            attrs["fixed-delay"] = _fmt(model.fixed_delay)
        if attrs["model"] == "csma":
            attrs["standard"] = model.standard
        if attrs["model"] == "tdma":
            attrs.update({"slot-len": _fmt(model.slot_len),
                          "slots-per-frame": str(model.slots_per_frame),
                          "owned-slots": " ".join(str(s) for s in sorted(model.owned_slots))})
        ET.SubElement(macs, "port", attrs)
    phy = ET.SubElement(root, "phy")
    for link in sorted((l for l in net.links if l.dst == node), key=lambda l: l.src):
        ET.SubElement(phy, "rx", {"from": str(link.src),
                                  "threshold": _fmt(link.params.rx_threshold),
                                  "initial-pathloss": _fmt(link.params.initial_pathloss)})
    ET.indent(root)
    return ET.tostring(root, encoding="unicode").encode() + b"\n"


def routing_stub(scenario: cfg.ConcreteScenario, node: int) -> bytes:
    lines = [f"node {node}", f"address {data_address(node)}"]
    for rr in scenario.protocols.get(node, ()):
        words = [f"protocol {rr.protocol}", f"preference {rr.preference}"]
        if rr.protocol in cfg.LINK_STATE:
            words += [f"hello_interval {rr.hello_interval!r}",
                      f"refresh_interval {rr.refresh_interval!r}",
                      f"hold_time {rr.hold_time!r}", f"lsa_max_age {rr.lsa_max_age!r}"]
        lines.append(" ".join(words))
        for src, dest, gw in rr.routes:
            if src == node:
                lines.append(f"route {data_address(dest)} via {data_address(gw)}")
    return ("\n".join(lines) + "\n").encode()


def _recipes(scenario: cfg.ConcreteScenario) -> dict[str, bytes]:
    protocols = sorted({rr.protocol for rr in scenario.spec.routing})
    apps = sorted({f.app for f in scenario.spec.traffic})
    base = ["# layer 1: base OS and radio emulator", "FROM ubuntu:20.04",
            "RUN apt-get update && apt-get install -y iproute2 emane", ""]
    routing = ["# layer 2: routing software", "FROM wnetlab/base",
               *[f"INSTALL routing {p}" for p in protocols], ""]
    layer3 = ["# layer 3: applications and monitoring", "FROM wnetlab/routing",
              *[f"INSTALL app {a}" for a in apps], "INSTALL monitor telegraf", ""]
    return {"recipes/base.recipe": "\n".join(base).encode(),
            "recipes/routing.recipe": "\n".join(routing).encode(),
            "recipes/apps.recipe": "\n".join(layer3).encode()}


def compile_external(scenario: cfg.ConcreteScenario,
                     events: EventLog | None = None) -> ArtifactBundle:
    """Render the per-node artifacts; bytes depend only on the scenario."""
    if events is None:
        events = scenario_events(scenario)
    files: dict[str, bytes] = {}
    for node in scenario.network.nodes:
        files[f"{node}/nem.xmlish"] = nem_document(scenario, node)
        files[f"{node}/routing.conf"] = routing_stub(scenario, node)
    files.update(_recipes(scenario))
    files["events.eel"] = serialize_eel(events).encode("ascii")
    manifest = {"n_nodes": scenario.n_nodes, "seed": scenario.spec.seed,
                "files": {p: _sha(files[p]) for p in sorted(files)}}
    files["manifest.json"] = (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()
    return ArtifactBundle(dict(sorted(files.items())))


# ----------------------------------------------------------------- pipeline


def scenario_events(scenario: cfg.ConcreteScenario, base_dir: Path | None = None) -> EventLog:
    """Generated events, or the imported file when the scenario names one."""
    spec = scenario.spec
    if spec.events_file is not None:
        path = Path(spec.events_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return import_precomputed(path, spec.duration, scenario.network)
    return generate_events(spec.links, spec.duration, spec.seed, scenario.network)


def apply_overrides(spec: cfg.ScenarioSpec, overrides: Mapping | None) -> cfg.ScenarioSpec:
    """Re-validate a spec with ``seed`` / ``duration`` replaced.

    A shorter duration clips traffic windows; flows starting at or after it are dropped.
    """
    overrides = {k: v for k, v in (overrides or {}).items()
                 if k in ("seed", "duration") and v is not None}
    if not overrides:
        return spec
    doc = cfg.to_dict(spec)
    doc.update(overrides)
    if "duration" in overrides:
        limit = overrides["duration"]
        kept = [f for f in doc["traffic"] if f["start"] < limit]
        if len(kept) < len(doc["traffic"]):
            log.warning("duration %ss drops %d flow(s) that start later",
                        limit, len(doc["traffic"]) - len(kept))
        for f in kept:
            f["stop"] = min(f["stop"], limit)
        doc["traffic"] = kept
    return cfg.parse(yaml.safe_dump(doc, sort_keys=True))


@dataclass
class Prepared:
    spec: cfg.ScenarioSpec
    scenario: cfg.ConcreteScenario
    events: EventLog
    plan: DeploymentPlan


def prepare(path: str | Path, overrides: Mapping | None = None,
            host_model: str = DEFAULT_HOST_MODEL) -> Prepared:
    """Everything before emulated t=0, with stage-labelled errors."""
    path = Path(path)
    try:
        spec = apply_overrides(cfg.load(path), overrides)
    except (cfg.ConfigError, OSError) as exc:
        raise StageError("config", exc) from exc
    try:
        scenario = cfg.expand(spec)
    except cfg.ConfigError as exc:
        raise StageError("expand", exc) from exc
    try:
        events = scenario_events(scenario, path.parent)
    except (ValueError, OSError) as exc:
        raise StageError("events", exc) from exc
    try:
        plan = plan_deployment(scenario.n_nodes, host_model)
    except ValueError as exc:
        raise StageError("plan", exc) from exc
    return Prepared(spec, scenario, events, plan)


def emulate(scenario: cfg.ConcreteScenario, events: EventLog) -> RunTrace:
    spec = scenario.spec
    plane = RoutingPlane(scenario.network, scenario.protocols)
    apps = [make_app(i, rule) for i, rule in enumerate(spec.traffic)]
    emu = Emulator(scenario.network, events, plane, apps, spec.duration, spec.seed,
                   spec.monitoring_period, spec.topology.transport)
    return emu.run()


@dataclass
class ReportBundle:
    prepared: Prepared
    cost: CostEstimate
    trace: RunTrace | None = None
    summary: TrafficSummary | None = None
    artifacts: ArtifactBundle | None = None
    startup_s: float = 0.0
    files: dict[str, bytes] = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        for rel, data in sorted(self.files.items()):
            target = out / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return out


def _json(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def run_scenario(path: str | Path, out_dir: str | Path | None = None,
                 overrides: Mapping | None = None, host_model: str = DEFAULT_HOST_MODEL,
                 pricing: Pricing = Pricing(), metrics_format: str = "csv") -> ReportBundle:
    """Run one configuration file end to end; write the report if ``out_dir`` is given."""
    t0 = time.perf_counter()
    prep = prepare(path, overrides, host_model)
    startup = time.perf_counter() - t0
    cost = estimate_cost(prep.plan, pricing)
    report = ReportBundle(prep, cost, startup_s=startup)
    files = report.files
    files["report/plan.json"] = _json({**prep.plan.to_dict(),
                                       "reference_bootstrap_s": REFERENCE_BOOTSTRAP_S})
    files["report/cost.json"] = _json({
        **cost.to_dict(), "pricing": asdict(pricing),
        "note": "hourly_rate defaults to a published 1-vCPU VM rate; all pricing is "
                "configurable"})

    if prep.spec.backend == "compile-only":
        report.artifacts = compile_external(prep.scenario, prep.events)
        for rel, data in report.artifacts.files.items():
            files[f"bundle/{rel}"] = data
    else:
        try:
            report.trace = emulate(prep.scenario, prep.events)
        except Exception as exc:  # noqa: BLE001 - every runtime failure gets a stage label
            raise StageError("emulate", exc) from exc
        trace = report.trace
        report.summary = summarize(trace.flows, prep.spec.warmup)
        files["report/summary.csv"] = summary_csv(report.summary).encode()
        files["report/summary.json"] = summary_json(report.summary).encode()
        files["report/routes.txt"] = trace.route_dump.encode()
        if metrics_format == "json":
            files["report/metrics.jsonl"] = trace.metrics.to_jsonl().encode()
        else:
            files["report/metrics.csv"] = trace.metrics.to_csv().encode()
        files["report/runtrace.json"] = trace.to_json().encode()
        files["report/packets.csv"] = trace.packets_csv().encode()

    if out_dir is not None:
        try:
            report.write(out_dir)
        except OSError as exc:
            raise StageError("export", exc) from exc
    return report

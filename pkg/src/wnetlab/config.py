"""Scenario configuration: parse, validate, print and expand.

One YAML document describes the whole experiment::

    duration: 60
    seed: 1
    topology: {num_nodes: 3, structure: ring}
    links:
      - select: all
        capacity: 11.0e+6
        mac: auto
        event_dist: poisson(0.1)
    traffic:
      - {src: 0, dst: 2, app: ping, interarrival: interval(1.0)}
    routing:
      - {nodes: all, protocol: olsr}

Every violation raises :class:`ConfigError` carrying a stable ``code`` and,
where the offending value came from the document, its line and column.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .dists import DistError, DistSpec, check_gap_dist, parse_dist, sample, substream
from .topology import (
    MAC_KINDS,
    STRUCTURES,
    EdgeSpec,
    LinkParams,
    Network,
    Selector,
    TopologyError,
    build,
    parse_edge_list,
)

log = logging.getLogger(__name__)

APPS = ("mgen", "ping", "iperf")
TRANSPORTS = ("udp", "tcp", "icmp")
PROTOCOLS = ("olsr", "ospf", "static", "centralized")
LINK_STATE = ("olsr", "ospf")
BACKENDS = ("in-process", "compile-only")
CAPABILITIES = ("broadcast", "multicast", "unicast")
DEFAULT_PREFERENCE = {"static": 1, "centralized": 10, "ospf": 110, "olsr": 120}
# bgp/rip engines are not provided; they fall back to a link-state protocol.
PROTOCOL_ALIASES = {"olsrv2": "olsr", "bgp": "ospf", "rip": "ospf"}
_WARN_ALIASES = {"bgp", "rip"}


class ConfigError(Exception):
    stage = "config"

    def __init__(self, code: str, message: str, line: int | None = None,
                 column: int | None = None):
        self.code = code
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self) -> str:
        where = f"line {self.line}, column {self.column}: " if self.line else ""
        return f"{where}{self.message} [{self.code}]"


class ConfigSyntaxError(ConfigError):
    pass


class ConfigSemanticError(ConfigError):
    pass


# ---------------------------------------------------------------- data model


@dataclass(frozen=True)
class TopologySpec:
    num_nodes: int | DistSpec
    structure: str
    random_p: float | None = None
    edges: tuple[EdgeSpec, ...] | None = None
    transport: tuple[str, ...] = CAPABILITIES


@dataclass(frozen=True)
class LinkRule:
    selector: Selector = Selector()
    params: LinkParams = LinkParams()
    event_dist: DistSpec | None = None
    pathloss_dist: DistSpec | None = None
    toggle_step: float = 40.0
    name: str | None = None


@dataclass(frozen=True)
class TrafficRule:
    src: int
    dst: int
    app: str
    transport: str
    interarrival: DistSpec
    packet_size: int
    start: float
    stop: float
    window: int = 8


@dataclass(frozen=True)
class RoutingRule:
    nodes: Selector
    protocol: str
    preference: int
    hello_interval: float = 2.0
    refresh_interval: float = 10.0
    hold_time: float = 6.0
    lsa_max_age: float = 30.0
    routes: tuple[tuple[int, int, int], ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    duration: int
    seed: int
    topology: TopologySpec
    links: tuple[LinkRule, ...] = ()
    traffic: tuple[TrafficRule, ...] = ()
    routing: tuple[RoutingRule, ...] = ()
    backend: str = "in-process"
    monitoring_period: float = 1.0
    warmup: float = 1.0
    events_file: str | None = None


@dataclass(frozen=True)
class ConcreteScenario:
    """A scenario with every count resolved and the graph materialized."""

    spec: ScenarioSpec
    network: Network
    protocols: dict = field(compare=False)

    @property
    def n_nodes(self) -> int:
        return self.network.n_nodes

    @property
    def flows(self) -> tuple[TrafficRule, ...]:
        return self.spec.traffic


# ------------------------------------------------------------------ loading


class _Loader(yaml.SafeLoader):
    """SafeLoader with YAML 1.2 core-schema scalars (``1e6`` is a float, ``yes`` a string)."""


_DROP = {"tag:yaml.org,2002:bool", "tag:yaml.org,2002:int",
         "tag:yaml.org,2002:float", "tag:yaml.org,2002:null"}
_Loader.yaml_implicit_resolvers = {
    ch: [r for r in rs if r[0] not in _DROP]
    for ch, rs in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:bool", re.compile(r"^(?:true|True|TRUE|false|False|FALSE)$"),
    list("tTfF"))
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:null", re.compile(r"^(?:~|null|Null|NULL|)$"),
    ["~", "n", "N", ""])
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:int", re.compile(r"^(?:[-+]?[0-9]+|0o[0-7]+|0x[0-9a-fA-F]+)$"),
    list("-+0123456789"))
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^(?:[-+]?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?)(?:[eE][-+]?[0-9]+)?"
               r"|[-+]?\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$"),
    list("-+0123456789."))


def _scalar(node: yaml.ScalarNode):
    tag, v = node.tag, node.value
    if tag.endswith(":null"):
        return None
    if tag.endswith(":bool"):
        return v.lower() == "true"
    if tag.endswith(":int"):
        return int(v, 0) if v[:2] in ("0x", "0o") else int(v)
    if tag.endswith(":float"):
        low = v.lower()
        if low.endswith(".inf"):
            return -math.inf if low.startswith("-") else math.inf
        if low == ".nan":
            return math.nan
        return float(v)
    return v


class _Doc:
    """Plain data plus a map from key paths to (line, column)."""

    def __init__(self, text: str):
        try:
            root = yaml.compose(text, Loader=_Loader)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
            raise ConfigSyntaxError("E_SYNTAX", f"YAML syntax error: {exc.problem}",
                                    line, col) from None
        except yaml.YAMLError as exc:
            raise ConfigSyntaxError("E_SYNTAX", f"YAML error: {exc}") from None
        self.marks: dict[tuple, tuple[int, int]] = {}
        self.data = self._convert(root, ()) if root is not None else None

    def _convert(self, node, path):
        self.marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                if not isinstance(k, yaml.ScalarNode):
                    self._fail_at(k, "E_TYPE", "mapping keys must be scalars")
                key = _scalar(k)
                if key in out:
                    self._fail_at(k, "E_DUPLICATE_KEY", f"duplicate key {key!r}")
                out[key] = self._convert(v, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, path + (i,)) for i, v in enumerate(node.value)]
        return _scalar(node)

    @staticmethod
    def _fail_at(node, code, msg):
        raise ConfigSyntaxError(code, msg, node.start_mark.line + 1,
                                node.start_mark.column + 1)

    def fail(self, code: str, message: str, path=()):
        path = tuple(path)
        while path and path not in self.marks:
            path = path[:-1]
        line, col = self.marks.get(path, (None, None))
        label = ".".join(str(p) for p in path)
        raise ConfigSemanticError(code, f"{label}: {message}" if label else message,
                                  line, col)


class _Reader:
    def __init__(self, doc: _Doc, base_dir: Path | None):
        self.doc = doc
        self.base_dir = base_dir

    fail = property(lambda self: self.doc.fail)

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail("E_TYPE", "expected a mapping", path)
        for key in value:
            if key not in allowed:
                self.fail("E_UNKNOWN_KEY", f"unknown key {key!r}", tuple(path) + (key,))
        for key in required:
            if key not in value:
                self.fail("E_MISSING_KEY", f"missing required key {key!r}", path)
        return value

    def number(self, value, path, *, minimum=None, strict=False, code="E_RANGE"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("E_TYPE", f"expected a number, got {value!r}", path)
        value = float(value)
        if not math.isfinite(value):
            self.fail(code, "must be finite", path)
        if minimum is not None and (value <= minimum if strict else value < minimum):
            rel = ">" if strict else ">="
            self.fail(code, f"must be {rel} {minimum:g}", path)
        return value

    def integer(self, value, path, *, minimum=None, code="E_RANGE"):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail("E_TYPE", f"expected an integer, got {value!r}", path)
        if minimum is not None and value < minimum:
            self.fail(code, f"must be >= {minimum}", path)
        return value

    def choice(self, value, path, options):
        if value not in options:
            self.fail("E_ENUM", f"{value!r} is not one of {', '.join(options)}", path)
        return value

    def dist(self, value, path, *, gap=False):
        try:
            d = parse_dist(value)
            if gap:
                check_gap_dist(d)
        except DistError as exc:
            self.fail(exc.code, str(exc), path)
        return d

    def node_list(self, value, path):
        if value == "all":
            return Selector("all")
        if not isinstance(value, list) or not value:
            self.fail("E_SELECTOR", "node group must be 'all' or a non-empty list", path)
        nodes = tuple(self.integer(v, tuple(path) + (i,), minimum=0, code="E_UNKNOWN_NODE")
                      for i, v in enumerate(value))
        return Selector("nodes", tuple(sorted(set(nodes))))

    def selector(self, value, path):
        if value == "all" or isinstance(value, list):
            return self.node_list(value, path)
        self.mapping(value, path, {"nodes", "pairs"})
        if len(value) != 1:
            self.fail("E_SELECTOR", "selector takes exactly one of 'nodes' or 'pairs'", path)
        if "nodes" in value:
            return self.node_list(value["nodes"], tuple(path) + ("nodes",))
        pairs = value["pairs"]
        ppath = tuple(path) + ("pairs",)
        if not isinstance(pairs, list) or not pairs:
            self.fail("E_SELECTOR", "pairs must be a non-empty list", ppath)
        out = []
        for i, p in enumerate(pairs):
            if not (isinstance(p, list) and len(p) == 2):
                self.fail("E_SELECTOR", "each pair is [src, dst]", ppath + (i,))
            a, b = (self.integer(x, ppath + (i, j), minimum=0, code="E_UNKNOWN_NODE")
                    for j, x in enumerate(p))
            out.append((a, b))
        return Selector("pairs", pairs=tuple(sorted(set(out))))


_TOP = {"duration", "seed", "topology", "links", "traffic", "routing",
        "emulation", "monitoring", "events_file"}
_TOPO = {"num_nodes", "structure", "random_p", "edges", "edge_file", "transport"}
_LINK = {"select", "capacity", "prop_delay", "initial_pathloss", "rx_threshold", "mac",
         "fixed_delay", "queue_limit", "slot_len", "slots_per_frame", "event_dist",
         "pathloss_dist", "toggle_step", "name"}
_TRAFFIC = {"src", "dst", "app", "transport", "interarrival", "packet_size",
            "start", "stop", "window"}
_ROUTING = {"nodes", "protocol", "params"}
_LS_PARAMS = {"hello_interval", "refresh_interval", "hold_time", "lsa_max_age", "preference"}
_DEFAULT_APP_TRANSPORT = {"ping": "icmp", "iperf": "udp", "mgen": "udp"}
_DEFAULT_SIZE = {"ping": 64, "iperf": 1250, "mgen": 512}


def _read_topology(r: _Reader, value, path) -> TopologySpec:
    r.mapping(value, path, _TOPO, ("num_nodes", "structure"))
    structure = r.choice(value["structure"], path + ("structure",), STRUCTURES)
    raw_n = value["num_nodes"]
    npath = path + ("num_nodes",)
    if isinstance(raw_n, int) and not isinstance(raw_n, bool):
        if raw_n < 1:
            r.fail("E_NODE_COUNT", "num_nodes must be >= 1", npath)
        num_nodes: int | DistSpec = raw_n
    else:
        num_nodes = r.dist(raw_n, npath)
    random_p = None
    if "random_p" in value:
        random_p = r.number(value["random_p"], path + ("random_p",), code="E_RANDOM_P")
        if not 0.0 <= random_p <= 1.0:
            r.fail("E_RANDOM_P", "random_p must lie in [0, 1]", path + ("random_p",))
    if structure == "random" and random_p is None:
        r.fail("E_RANDOM_P", "random structure requires random_p", path)
    edges = None
    if "edges" in value and "edge_file" in value:
        r.fail("E_EDGES", "give either edges or edge_file, not both", path)
    if "edge_file" in value:
        epath = path + ("edge_file",)
        fname = Path(str(value["edge_file"]))
        if not fname.is_absolute() and r.base_dir is not None:
            fname = r.base_dir / fname
        try:
            edges = tuple(parse_edge_list(fname.read_text(encoding="utf-8")))
        except OSError as exc:
            r.fail("E_EDGE_FILE", f"cannot read edge file: {exc.strerror}", epath)
        except TopologyError as exc:
            r.fail(exc.code, str(exc), epath)
    elif "edges" in value:
        edges = tuple(_read_edges(r, value["edges"], path + ("edges",)))
    if structure == "predefined":
        if edges is None:
            r.fail("E_EDGES", "predefined structure requires edges", path)
        seen = set()
        for i, e in enumerate(edges):
            if e.src == e.dst:
                r.fail("E_SELF_LOOP", f"self loop on node {e.src}", path + ("edges", i))
            if (e.src, e.dst) in seen:
                r.fail("E_MULTI_EDGE", f"duplicate link {e.src}->{e.dst}", path + ("edges", i))
            seen.add((e.src, e.dst))
    elif edges is not None:
        r.fail("E_EDGES", "edges only apply to the predefined structure", path)
    if structure == "ring" and num_nodes == 1:
        r.fail("E_RING_SIZE", "a ring needs at least 2 nodes", npath)
    transport = CAPABILITIES
    if "transport" in value:
        tpath = path + ("transport",)
        caps = value["transport"]
        if not isinstance(caps, list) or not caps:
            r.fail("E_TRANSPORT", "transport must be a non-empty list", tpath)
        transport = tuple(sorted({r.choice(c, tpath + (i,), CAPABILITIES)
                                  for i, c in enumerate(caps)}))
    return TopologySpec(num_nodes, structure, random_p, edges, transport)


def _read_edges(r: _Reader, value, path):
    if not isinstance(value, list):
        r.fail("E_EDGES", "edges must be a list", path)
    for i, e in enumerate(value):
        epath = path + (i,)
        if isinstance(e, list):
            if len(e) != 2:
                r.fail("E_EDGES", "edge is [src, dst]", epath)
            yield EdgeSpec(*(r.integer(x, epath + (j,), minimum=0, code="E_UNKNOWN_NODE")
                             for j, x in enumerate(e)))
            continue
        r.mapping(e, epath, {"src", "dst", "capacity", "prop_delay", "initial_pathloss"},
                  ("src", "dst"))
        src = r.integer(e["src"], epath + ("src",), minimum=0, code="E_UNKNOWN_NODE")
        dst = r.integer(e["dst"], epath + ("dst",), minimum=0, code="E_UNKNOWN_NODE")
        over = []
        for key in ("capacity", "prop_delay", "initial_pathloss"):
            if key in e:
                code = {"capacity": "E_CAPACITY", "prop_delay": "E_DELAY"}.get(key, "E_RANGE")
                lo = {"capacity": 0.0, "prop_delay": 0.0}.get(key)
                over.append((key, r.number(e[key], epath + (key,), minimum=lo,
                                           strict=key == "capacity", code=code)))
        yield EdgeSpec(src, dst, tuple(over))


def _read_link(r: _Reader, value, path) -> LinkRule:
    r.mapping(value, path, _LINK)
    sel = r.selector(value.get("select", "all"), path + ("select",))
    d = LinkParams()
    p = {}
    p["capacity"] = r.number(value.get("capacity", d.capacity), path + ("capacity",),
                             minimum=0.0, strict=True, code="E_CAPACITY")
    for key in ("prop_delay", "fixed_delay"):
        p[key] = r.number(value.get(key, getattr(d, key)), path + (key,),
                          minimum=0.0, code="E_DELAY")
    for key in ("initial_pathloss", "rx_threshold"):
        p[key] = r.number(value.get(key, getattr(d, key)), path + (key,))
    p["mac"] = r.choice(value.get("mac", d.mac), path + ("mac",), MAC_KINDS)
    p["queue_limit"] = r.integer(value.get("queue_limit", d.queue_limit),
                                 path + ("queue_limit",), minimum=1, code="E_QUEUE")
    p["slot_len"] = r.number(value.get("slot_len", d.slot_len), path + ("slot_len",),
                             code="E_TDMA_PARAMS")
    p["slots_per_frame"] = r.integer(value.get("slots_per_frame", d.slots_per_frame),
                                     path + ("slots_per_frame",), code="E_TDMA_PARAMS")
    if p["mac"] == "tdma" and not (p["slot_len"] > 0 and p["slots_per_frame"] >= 1):
        r.fail("E_TDMA_PARAMS", "tdma needs slot_len > 0 and slots_per_frame >= 1", path)
    event_dist = pathloss_dist = None
    if value.get("event_dist") is not None:
        event_dist = r.dist(value["event_dist"], path + ("event_dist",), gap=True)
    if value.get("pathloss_dist") is not None:
        pathloss_dist = r.dist(value["pathloss_dist"], path + ("pathloss_dist",))
    step = r.number(value.get("toggle_step", 40.0), path + ("toggle_step",))
    name = value.get("name")
    if name is not None and (not isinstance(name, str) or not name):
        r.fail("E_TYPE", "name must be a non-empty string", path + ("name",))
    return LinkRule(sel, LinkParams(**p), event_dist, pathloss_dist, step, name)


def _read_traffic(r: _Reader, value, path, duration) -> TrafficRule:
    r.mapping(value, path, _TRAFFIC, ("src", "dst", "app"))
    src = r.integer(value["src"], path + ("src",), minimum=0, code="E_UNKNOWN_NODE")
    dst = r.integer(value["dst"], path + ("dst",), minimum=0, code="E_UNKNOWN_NODE")
    if src == dst:
        r.fail("E_SAME_ENDPOINTS", "src and dst must differ", path)
    app = r.choice(value["app"], path + ("app",), APPS)
    transport = r.choice(value.get("transport", _DEFAULT_APP_TRANSPORT[app]),
                         path + ("transport",), TRANSPORTS)
    if (app == "ping") != (transport == "icmp"):
        r.fail("E_APP_TRANSPORT", f"app {app} cannot use transport {transport}", path)
    inter = r.dist(value.get("interarrival", "interval(1.0)"), path + ("interarrival",),
                   gap=True)
    size = r.integer(value.get("packet_size", _DEFAULT_SIZE[app]), path + ("packet_size",),
                     minimum=1, code="E_PACKET_SIZE")
    start = r.number(value.get("start", 0.0), path + ("start",), minimum=0.0, code="E_WINDOW")
    stop = r.number(value.get("stop", float(duration)), path + ("stop",), code="E_WINDOW")
    if not start < stop:
        r.fail("E_WINDOW", "start must be before stop", path)
    if stop > duration:
        r.fail("E_WINDOW", f"stop {stop:g} exceeds scenario duration {duration}",
               path + ("stop",))
    window = r.integer(value.get("window", 8), path + ("window",), minimum=1, code="E_RANGE")
    return TrafficRule(src, dst, app, transport, inter, size, start, stop, window)


def _read_routing(r: _Reader, value, path) -> RoutingRule:
    r.mapping(value, path, _ROUTING, ("protocol",))
    nodes = r.node_list(value.get("nodes", "all"), path + ("nodes",))
    ppath = path + ("protocol",)
    proto = value["protocol"]
    if proto in PROTOCOL_ALIASES:
        if proto in _WARN_ALIASES:
            log.warning("routing protocol %r runs as %r (no native engine)",
                        proto, PROTOCOL_ALIASES[proto])
        proto = PROTOCOL_ALIASES[proto]
    r.choice(proto, ppath, PROTOCOLS)
    params = value.get("params") or {}
    prpath = path + ("params",)
    allowed = set(_LS_PARAMS) if proto in LINK_STATE else {"preference"}
    if proto == "static":
        allowed.add("routes")
    r.mapping(params, prpath, allowed)
    pref = r.integer(params.get("preference", DEFAULT_PREFERENCE[proto]),
                     prpath + ("preference",), minimum=0)
    kw = {}
    for key in ("hello_interval", "refresh_interval", "hold_time", "lsa_max_age"):
        if key in params:
            kw[key] = r.number(params[key], prpath + (key,), minimum=0.0, strict=True,
                               code="E_PROTOCOL_PARAMS")
    routes = []
    for i, route in enumerate(params.get("routes", [])):
        rpath = prpath + ("routes", i)
        if not (isinstance(route, list) and len(route) == 3):
            r.fail("E_ROUTE", "static route is [node, dest, gateway]", rpath)
        routes.append(tuple(r.integer(x, rpath + (j,), minimum=0, code="E_UNKNOWN_NODE")
                            for j, x in enumerate(route)))
    rule = RoutingRule(nodes, proto, pref, routes=tuple(sorted(routes)), **kw)
    if proto in LINK_STATE and rule.hold_time <= rule.hello_interval:
        r.fail("E_PROTOCOL_PARAMS", "hold_time must exceed hello_interval", prpath)
    return rule


def parse(text: str, base_dir: str | Path | None = None) -> ScenarioSpec:
    """Parse and validate a configuration document.

    ``base_dir`` anchors relative ``edge_file`` paths. Node references are
    checked here when the node count is a constant and again by :func:`expand`.
    """
    doc = _Doc(text)
    r = _Reader(doc, Path(base_dir) if base_dir is not None else None)
    top = r.mapping(doc.data, (), _TOP, ("duration", "topology"))
    duration = r.integer(top["duration"], ("duration",), minimum=1, code="E_DURATION")
    seed = r.integer(top.get("seed", 0), ("seed",), minimum=0, code="E_SEED")
    topology = _read_topology(r, top["topology"], ("topology",))

    def rules(key, reader, *extra):
        raw = top.get(key) or []
        if not isinstance(raw, list):
            r.fail("E_TYPE", "expected a list of rules", (key,))
        return tuple(reader(r, v, (key, i), *extra) for i, v in enumerate(raw))

    links = rules("links", _read_link)
    traffic = rules("traffic", _read_traffic, duration)
    if "routing" in top:
        routing = rules("routing", _read_routing)
    else:
        routing = (RoutingRule(Selector("all"), "static", DEFAULT_PREFERENCE["static"]),)

    emu = r.mapping(top.get("emulation") or {}, ("emulation",), {"backend"})
    backend = r.choice(emu.get("backend", "in-process"), ("emulation", "backend"), BACKENDS)
    mon = r.mapping(top.get("monitoring") or {}, ("monitoring",), {"period", "warmup"})
    period = r.number(mon.get("period", 1.0), ("monitoring", "period"), minimum=0.0,
                      strict=True, code="E_PERIOD")
    warmup = r.number(mon.get("warmup", 1.0), ("monitoring", "warmup"), minimum=0.0,
                      code="E_PERIOD")
    events_file = top.get("events_file")
    if events_file is not None and not isinstance(events_file, str):
        r.fail("E_TYPE", "events_file must be a path string", ("events_file",))

    spec = ScenarioSpec(duration, seed, topology, links, traffic, routing, backend,
                        period, warmup, events_file)
    _check_protocol_overlap(spec, doc)
    if isinstance(topology.num_nodes, int):
        _check_references(spec, topology.num_nodes, doc.fail)
    return spec


def _check_protocol_overlap(spec: ScenarioSpec, doc: _Doc) -> None:
    seen: dict[str, list[tuple[int, RoutingRule]]] = {}
    for i, rule in enumerate(spec.routing):
        for j, other in seen.get(rule.protocol, []):
            if (rule.nodes.kind == "all" or other.nodes.kind == "all"
                    or set(rule.nodes.nodes) & set(other.nodes.nodes)):
                doc.fail("E_DUP_PROTOCOL",
                         f"protocol {rule.protocol} configured twice on a node "
                         f"(rules {j} and {i})", ("routing", i))
        seen.setdefault(rule.protocol, []).append((i, rule))


def _check_references(spec: ScenarioSpec, n: int, fail) -> None:
    def check(node, path):
        if not 0 <= node < n:
            fail("E_UNKNOWN_NODE", f"node {node} does not exist ({n} nodes)", path)

    for i, e in enumerate(spec.topology.edges or ()):
        check(e.src, ("topology", "edges", i))
        check(e.dst, ("topology", "edges", i))
    for i, rule in enumerate(spec.links):
        for node in sorted(rule.selector.referenced()):
            check(node, ("links", i, "select"))
    for i, t in enumerate(spec.traffic):
        check(t.src, ("traffic", i, "src"))
        check(t.dst, ("traffic", i, "dst"))
    for i, rule in enumerate(spec.routing):
        for node in rule.nodes.nodes:
            check(node, ("routing", i, "nodes"))
        for j, route in enumerate(rule.routes):
            for node in route:
                check(node, ("routing", i, "params", "routes", j))
            if route[0] == route[1]:
                fail("E_ROUTE", "static route to self", ("routing", i, "params", "routes", j))


def load(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ConfigSyntaxError("E_ENCODING", f"{path} is not valid UTF-8") from None
    return parse(text, base_dir=path.parent)


# ----------------------------------------------------------------- printing


def _num(x: float):
    return int(x) if isinstance(x, int) else float(x)


def to_dict(spec: ScenarioSpec | ConcreteScenario) -> dict[str, Any]:
    if isinstance(spec, ConcreteScenario):
        spec = spec.spec
    topo = spec.topology
    t: dict[str, Any] = {
        "num_nodes": topo.num_nodes if isinstance(topo.num_nodes, int) else topo.num_nodes.to_dict(),
        "structure": topo.structure,
        "transport": list(topo.transport),
    }
    if topo.random_p is not None:
        t["random_p"] = topo.random_p
    if topo.edges is not None:
        t["edges"] = [e.to_yaml() for e in topo.edges]
    out: dict[str, Any] = {
        "duration": spec.duration,
        "seed": spec.seed,
        "topology": t,
        "links": [_link_dict(l) for l in spec.links],
        "traffic": [_traffic_dict(f) for f in spec.traffic],
        "routing": [_routing_dict(rr) for rr in spec.routing],
        "emulation": {"backend": spec.backend},
        "monitoring": {"period": spec.monitoring_period, "warmup": spec.warmup},
    }
    if spec.events_file is not None:
        out["events_file"] = spec.events_file
    return out


def _link_dict(rule: LinkRule) -> dict:
    p = rule.params
    d = {
        "select": rule.selector.to_yaml(),
        "capacity": p.capacity, "prop_delay": p.prop_delay,
        "initial_pathloss": p.initial_pathloss, "rx_threshold": p.rx_threshold,
        "mac": p.mac, "fixed_delay": p.fixed_delay, "queue_limit": p.queue_limit,
        "slot_len": p.slot_len, "slots_per_frame": p.slots_per_frame,
        "toggle_step": rule.toggle_step,
    }
    if rule.event_dist is not None:
        d["event_dist"] = rule.event_dist.to_dict()
    if rule.pathloss_dist is not None:
        d["pathloss_dist"] = rule.pathloss_dist.to_dict()
    if rule.name is not None:
        d["name"] = rule.name
    return d


def _traffic_dict(f: TrafficRule) -> dict:
    return {
        "src": f.src, "dst": f.dst, "app": f.app, "transport": f.transport,
        "interarrival": f.interarrival.to_dict(), "packet_size": f.packet_size,
        "start": f.start, "stop": f.stop, "window": f.window,
    }


def _routing_dict(rr: RoutingRule) -> dict:
    params: dict[str, Any] = {"preference": rr.preference}
    if rr.protocol in LINK_STATE:
        params.update(hello_interval=rr.hello_interval, refresh_interval=rr.refresh_interval,
                      hold_time=rr.hold_time, lsa_max_age=rr.lsa_max_age)
    if rr.protocol == "static":
        params["routes"] = [list(x) for x in rr.routes]
    nodes = "all" if rr.nodes.kind == "all" else list(rr.nodes.nodes)
    return {"nodes": nodes, "protocol": rr.protocol, "params": params}


class _Dumper(yaml.SafeDumper):
    def increase_indent(self, flow=False, indentless=False):
        return super().increase_indent(flow, False)


def dump(spec: ScenarioSpec | ConcreteScenario) -> str:
    """Canonical text: sorted keys, 2-space indent, block style."""
    return yaml.dump(to_dict(spec), Dumper=_Dumper, sort_keys=True, indent=2,
                     default_flow_style=False, allow_unicode=False)


# ---------------------------------------------------------------- expansion


def resolve_count(value: int | DistSpec, rng) -> int:
    """Sample a count, round half up, and reject anything below 1."""
    if isinstance(value, int):
        n = value
    else:
        n = math.floor(sample(value, rng) + 0.5)
    if n < 1:
        raise ConfigSemanticError("E_NODE_COUNT",
                                  f"node count resolved to {n}; it must be >= 1")
    return n


def _raise(code, message, path=()):
    label = ".".join(str(p) for p in path)
    raise ConfigSemanticError(code, f"{label}: {message}" if label else message)


def expand(spec: ScenarioSpec) -> ConcreteScenario:
    """Resolve node count and build the graph; pure in ``(spec, spec.seed)``."""
    n = resolve_count(spec.topology.num_nodes, substream(spec.seed, "num_nodes"))
    if spec.topology.structure == "ring" and n < 2:
        raise ConfigSemanticError("E_RING_SIZE", f"a ring needs at least 2 nodes, got {n}")
    resolved = replace(spec, topology=replace(spec.topology, num_nodes=n))
    _check_references(resolved, n, _raise)
    try:
        network = build(resolved.topology, resolved.links, substream(spec.seed, "topology"))
    except TopologyError as exc:
        raise ConfigSemanticError(exc.code, str(exc)) from None
    protocols: dict[int, tuple[RoutingRule, ...]] = {}
    for node in range(n):
        protocols[node] = tuple(rr for rr in resolved.routing
                                if node in rr.nodes.node_set(n))
    for rr in resolved.routing:
        for node, dest, gw in rr.routes:
            if network.link(node, gw) is None:
                raise ConfigSemanticError(
                    "E_ROUTE", f"static route {node}->{dest} via {gw}: no link {node}->{gw}")
    return ConcreteScenario(resolved, network, protocols)

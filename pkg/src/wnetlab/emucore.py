"""Deterministic discrete-event packet emulator.

Each directed link is an output port with its own MAC model and queue. The
PHY delivers a frame when the link's current path loss is at or below the
receiver threshold. Time is integer nanoseconds internally, so schedules
are exact and ties resolve by insertion order.

The emulator knows nothing about routing or applications. It talks to a
*route provider* (``start``, ``lookup``, ``on_control``, ``on_link_event``,
``tables``) and to *traffic sources* (``flow_id``, ``start``, ``on_deliver``,
``on_drop``, ``finish``, ``record``).
"""
from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .dists import substream
from .linkevents import EventLog
from .metrics import MetricPoint, MetricStore, ResourceSample, ResourceSampler, record_samples
from .topology import Link, Network

NS = 1_000_000_000
BROADCAST = -1

PACKET_KINDS = ("data-udp", "data-tcp-segment", "tcp-ack", "icmp-echo", "icmp-reply",
                "control-hello", "control-lsa")
DROP_REASONS = ("phy", "queue-full", "ttl-exceeded", "no-route")

# 802.11 rate sets in bit/s.
DSSS_RATES = (1e6, 2e6, 5.5e6, 11e6)
OFDM_RATES = (6e6, 9e6, 12e6, 18e6, 24e6, 36e6, 48e6, 54e6)


class EmulationError(RuntimeError):
    stage = "run"


class EmulationConfigError(EmulationError):
    """The scenario asks for something the NEM stacks cannot do."""


# ---------------------------------------------------------------- MAC models


@dataclass(frozen=True)
class RfPipe:
    datarate: float
    fixed_delay: float = 0.0
    queue_limit: int = 50

    def __post_init__(self):
        _check_mac(self)


@dataclass(frozen=True)
class Csma:
    """Shared-medium MAC; contention divides the rate fairly."""

    datarate: float
    standard: str = "generic"
    queue_limit: int = 50

    def __post_init__(self):
        _check_mac(self)


@dataclass(frozen=True)
class Tdma:
    datarate: float
    slot_len: float = 0.01
    slots_per_frame: int = 10
    owned_slots: frozenset = frozenset({0})
    queue_limit: int = 50

    def __post_init__(self):
        _check_mac(self)
        if not (self.slot_len > 0 and self.slots_per_frame >= 1):
            raise ValueError("tdma needs slot_len > 0 and slots_per_frame >= 1")
        if not self.owned_slots or any(not 0 <= s < self.slots_per_frame
                                       for s in self.owned_slots):
            raise ValueError("owned slots must be a non-empty subset of the frame")


MacModel = RfPipe | Csma | Tdma


def _check_mac(m) -> None:
    if not m.datarate > 0:
        raise ValueError("datarate must be positive")
    if m.queue_limit < 1:
        raise ValueError("queue_limit must be >= 1")


def phy_receive(current_pathloss: float, rx_threshold: float) -> bool:
    """Frame survives the channel iff loss <= threshold (boundary delivers)."""
    return current_pathloss <= rx_threshold


def transmission_delay(size: int, rate: float) -> float:
    """Serialization time in seconds of ``size`` bytes at ``rate`` bit/s."""
    if size < 1:
        raise ValueError("packet size must be >= 1 byte")
    if not rate > 0:
        raise ValueError("rate must be positive")
    return 8.0 * size / rate


def _tx_ns(size: int, rate: float) -> int:
    transmission_delay(size, rate)
    return round(8 * size * NS / rate)


def _in_rate_set(rate: float, rates) -> bool:
    return any(abs(rate - r) < 1.0 for r in rates)


def rate_class(rate: float) -> str | None:
    if _in_rate_set(rate, DSSS_RATES):
        return "802.11b"
    if _in_rate_set(rate, OFDM_RATES):
        return "802.11g"
    return None


def map_rate_to_mac(requested_rate: float, mac: str | None = None, *,
                    fixed_delay: float = 0.0, queue_limit: int = 50,
                    slot_len: float = 0.01, slots_per_frame: int = 10,
                    owned_slots: Iterable[int] = (0,)) -> MacModel:
    """Pick a MAC for a rate; an explicit ``mac`` choice always wins.

    Without a choice, 802.11b rates map to a b-class CSMA, OFDM rates to a
    g-class CSMA and anything else to an RF pipe at the requested rate.
    """
    if not requested_rate > 0:
        raise ValueError("rate must be positive")
    if mac in (None, "auto"):
        cls = rate_class(requested_rate)
        if cls is not None:
            return Csma(requested_rate, cls, queue_limit)
        return RfPipe(requested_rate, fixed_delay, queue_limit)
    if mac == "rf-pipe":
        return RfPipe(requested_rate, fixed_delay, queue_limit)
    if mac == "csma":
        return Csma(requested_rate, rate_class(requested_rate) or "generic", queue_limit)
    if mac == "tdma":
        return Tdma(requested_rate, slot_len, slots_per_frame, frozenset(owned_slots),
                    queue_limit)
    raise ValueError(f"unknown mac {mac!r}")


def mac_for_link(link: Link) -> MacModel:
    p = link.params
    owned = (link.src % p.slots_per_frame,)
    return map_rate_to_mac(p.capacity, p.mac, fixed_delay=p.fixed_delay,
                           queue_limit=p.queue_limit, slot_len=p.slot_len,
                           slots_per_frame=p.slots_per_frame, owned_slots=owned)


def _service_ns(model: MacModel, now: int, size: int, contenders: int) -> tuple[int, int]:
    """Return ``(port_free_at, departure)`` for a frame entering service at ``now``."""
    if isinstance(model, RfPipe):
        tx = _tx_ns(size, model.datarate)
        return now + tx, now + tx + round(model.fixed_delay * NS)
    if isinstance(model, Csma):
        tx = _tx_ns(size, model.datarate / max(1, contenders))
        return now + tx, now + tx
    if isinstance(model, Tdma):
        slot = round(model.slot_len * NS)
        k = -(-now // slot)
        while k % model.slots_per_frame not in model.owned_slots:
            k += 1
        start = k * slot
        tx = _tx_ns(size, model.datarate)
        return start + max(slot, tx), start + tx
    raise TypeError(f"not a MAC model: {model!r}")


def mac_dequeue(model: MacModel, now: float, size: int, contenders: int = 1) -> float:
    """Departure time (s) of a ``size``-byte frame that enters service at ``now``."""
    return _service_ns(model, round(now * NS), size, contenders)[1] / NS


# ------------------------------------------------------------------ packets


@dataclass
class Packet:
    id: int
    flow_id: Any
    src: int
    dst: int
    size: int
    kind: str
    created_ns: int
    hop_trace: list[tuple[int, int]] = field(default_factory=list)
    payload: Any = None
    seq: int | None = None
    recv_ns: int | None = None
    drop_reason: str | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("packet size must be >= 1 byte")
        if self.kind not in PACKET_KINDS:
            raise ValueError(f"unknown packet kind {self.kind!r}")

    @property
    def created_at(self) -> float:
        return self.created_ns / NS

    @property
    def hops(self) -> int:
        return len(self.hop_trace) - 1

    @property
    def hop_times(self) -> list[tuple[int, float]]:
        return [(n, t / NS) for n, t in self.hop_trace]


@dataclass(frozen=True)
class NemStack:
    node: int
    transport: frozenset
    ports: tuple[int, ...]
    macs: tuple[MacModel, ...]
    rx_thresholds: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.transport:
            raise EmulationConfigError("transport capabilities must be non-empty")


class EmuClock:
    """Priority queue of timed callbacks ordered by (time, insertion)."""

    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = itertools.count()

    def schedule(self, t_ns: int, fn: Callable, *args) -> None:
        if t_ns < self.now:
            raise EmulationError(f"cannot schedule in the past ({t_ns} < {self.now})")
        heapq.heappush(self._heap, (t_ns, next(self._seq), fn, args))

    def peek(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop(self):
        t, _, fn, args = heapq.heappop(self._heap)
        self.now = t
        return fn, args

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class _Port:
    link: Link
    mac: MacModel
    queue: deque = field(default_factory=deque)
    in_service: Packet | None = None

    @property
    def busy(self) -> bool:
        return self.in_service is not None

    def held(self) -> int:
        return len(self.queue) + (self.in_service is not None)

    def held_bytes(self) -> int:
        b = sum(p.size for p in self.queue)
        return b + (self.in_service.size if self.in_service else 0)


# ------------------------------------------------------------------ run trace


def _s(ns: int | None):
    return None if ns is None else ns / NS


@dataclass
class RunTrace:
    duration: float
    seed: int
    packets: list[Packet]
    counters: dict[str, int]
    flows: dict
    samples: list[ResourceSample]
    metrics: MetricStore
    routes: dict
    route_dump: str = ""

    def conservation_holds(self) -> bool:
        c = self.counters
        return c["sent"] == (c["delivered"] + sum(c[f"dropped_{r}"] for r in DROP_REASONS)
                             + c["in_flight"])

    def hop_events(self) -> int:
        return sum(len(p.hop_trace) for p in self.packets)

    def packets_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["flow_id", "packet_id", "src", "dst", "sent_s", "recv_s_or_drop",
                    "size_bytes"])
        for p in self.packets:
            if p.recv_ns is not None:
                outcome = repr(p.recv_ns / NS)
            else:
                outcome = p.drop_reason or "in-flight"
            w.writerow(["" if p.flow_id is None else p.flow_id, p.id, p.src,
                        "broadcast" if p.dst == BROADCAST else p.dst,
                        repr(p.created_ns / NS), outcome, p.size])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration,
            "seed": self.seed,
            "counters": dict(sorted(self.counters.items())),
            "flows": {str(k): v.to_dict() for k, v in sorted(self.flows.items())},
            "samples": [[s.t, s.node, s.cpu_proxy, s.mem_proxy] for s in self.samples],
            "packets": [
                {"id": p.id, "flow": p.flow_id, "kind": p.kind, "src": p.src, "dst": p.dst,
                 "size": p.size, "sent_s": _s(p.created_ns), "recv_s": _s(p.recv_ns),
                 "drop": p.drop_reason,
                 "hops": [[n, t / NS] for n, t in p.hop_trace]}
                for p in self.packets
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


# ------------------------------------------------------------------ emulator


class Emulator:
    """One scenario run. Create, then call :meth:`run` once."""

    def __init__(self, network: Network, eventlog: EventLog | None, route_provider,
                 traffic_sources: Sequence = (), duration: float = 60.0, seed: int = 0,
                 monitoring_period: float = 1.0,
                 transport: Iterable[str] = ("broadcast", "multicast", "unicast")):
        self.network = network
        self.n_nodes = network.n_nodes
        self.eventlog = eventlog or EventLog()
        self.routes = route_provider
        self.apps = {app.flow_id: app for app in traffic_sources}
        if len(self.apps) != len(traffic_sources):
            raise EmulationConfigError("flow ids must be unique")
        self.duration = duration
        self.end_ns = round(duration * NS)
        self.seed = seed
        self.clock = EmuClock()
        self.ports = [_Port(link, mac_for_link(link)) for link in network.links]
        self._node_ports: dict[int, list[_Port]] = {n: [] for n in network.nodes}
        for port in self.ports:
            self._node_ports[port.link.src].append(port)
        self._domain = {n: sorted(network.neighbors(n) | {n}) for n in network.nodes}
        self.pathloss = {(l.src, l.dst): l.params.initial_pathloss for l in network.links}
        caps = frozenset(transport)
        self.nems = [
            NemStack(n, caps, tuple(p.link.id for p in self._node_ports[n]),
                     tuple(p.mac for p in self._node_ports[n]),
                     tuple((l.src, l.params.rx_threshold) for l in network.links
                           if l.dst == n))
            for n in network.nodes
        ]
        self.packets: list[Packet] = []
        self._ids = itertools.count()
        self._handled = [0] * self.n_nodes
        self.counters = {"sent": 0, "delivered": 0, "in_flight": 0,
                         **{f"dropped_{r}": 0 for r in DROP_REASONS}}
        self.metrics = MetricStore()
        self.samples: list[ResourceSample] = []
        self._sampler = ResourceSampler(monitoring_period)
        self._period_ns = round(monitoring_period * NS)
        if self._period_ns <= 0:
            raise EmulationConfigError("monitoring period must be positive")
        self._ran = False

    # -- clock and helpers used by routing and traffic -----------------------

    @property
    def now_ns(self) -> int:
        return self.clock.now

    @property
    def now(self) -> float:
        return self.clock.now / NS

    def at(self, t_ns: int, fn: Callable, *args) -> None:
        """Schedule ``fn(*args)``; anything past the run horizon never fires."""
        if t_ns <= self.end_ns:
            self.clock.schedule(t_ns, fn, *args)

    def after(self, delay_s: float, fn: Callable, *args) -> None:
        self.at(self.clock.now + round(delay_s * NS), fn, *args)

    def rng(self, *names):
        return substream(self.seed, "emulator", *names)

    def link_up(self, src: int, dst: int) -> bool:
        link = self.network.link(src, dst)
        return link is not None and phy_receive(self.pathloss[(src, dst)],
                                                link.params.rx_threshold)

    def handled_total(self, node: int) -> int:
        return self._handled[node]

    def queued_bytes(self, node: int) -> int:
        return sum(p.held_bytes() for p in self._node_ports[node])

    def new_packet(self, flow_id, src: int, dst: int, size: int, kind: str,
                   payload=None, seq: int | None = None) -> Packet:
        pkt = Packet(next(self._ids), flow_id, src, dst, size, kind, self.clock.now,
                     payload=payload, seq=seq)
        self.packets.append(pkt)
        self.counters["sent"] += 1
        return pkt

    # -- data path -----------------------------------------------------------

    def send(self, packet: Packet) -> None:
        """Hand a freshly created unicast packet to its source node."""
        self._handle(packet, packet.src)
        self._forward(packet, packet.src)

    def broadcast(self, origin: int, kind: str, size: int, payload=None,
                  flow_id=None) -> list[Packet]:
        """One copy per out-link of ``origin``; the PHY decides who hears it."""
        if "broadcast" not in self.nems[origin].transport:
            raise EmulationConfigError(f"node {origin} has no broadcast capability")
        copies = []
        for port in self._node_ports[origin]:
            pkt = self.new_packet(flow_id, origin, BROADCAST, size, kind, payload)
            self._handle(pkt, origin)
            self._enqueue(port, pkt)
            copies.append(pkt)
        return copies

    def _handle(self, pkt: Packet, node: int) -> None:
        pkt.hop_trace.append((node, self.clock.now))
        self._handled[node] += 1

    def _drop(self, pkt: Packet, reason: str) -> None:
        pkt.drop_reason = reason
        self.counters[f"dropped_{reason}"] += 1
        app = self.apps.get(pkt.flow_id)
        if app is not None:
            app.on_drop(pkt, reason)

    def _forward(self, pkt: Packet, node: int) -> None:
        if pkt.hops > 2 * self.n_nodes:
            self._drop(pkt, "ttl-exceeded")
            return
        entry = self.routes.lookup(node, pkt.dst)
        if entry is None:
            self._drop(pkt, "no-route")
            return
        port = self.ports[entry.out_port]
        if port.link.src != node:
            raise EmulationError(f"route at node {node} points at foreign port {entry.out_port}")
        self._enqueue(port, pkt)

    def _enqueue(self, port: _Port, pkt: Packet) -> None:
        if port.held() >= port.mac.queue_limit:
            self._drop(pkt, "queue-full")
            return
        port.queue.append(pkt)
        if not port.busy:
            self._start_service(port)

    def _contenders(self, port: _Port) -> int:
        if not isinstance(port.mac, Csma):
            return 1
        busy = 0
        for n in self._domain[port.link.src]:
            for other in self._node_ports[n]:
                if other is not port and other.busy and isinstance(other.mac, Csma):
                    busy += 1
        return busy + 1

    def _start_service(self, port: _Port) -> None:
        pkt = port.queue.popleft()
        port.in_service = pkt
        free_at, depart = _service_ns(port.mac, self.clock.now, pkt.size,
                                      self._contenders(port))
        arrive = depart + round(port.link.params.prop_delay * NS)
        # Always schedule completion so the port state stays consistent;
        # arrivals past the horizon remain in flight.
        self.clock.schedule(free_at, self._service_done, port)
        self.at(arrive, self._arrive, pkt, port.link)

    def _service_done(self, port: _Port) -> None:
        port.in_service = None
        if port.queue:
            self._start_service(port)

    def _arrive(self, pkt: Packet, link: Link) -> None:
        if not phy_receive(self.pathloss[(link.src, link.dst)], link.params.rx_threshold):
            self._drop(pkt, "phy")
            return
        node = link.dst
        self._handle(pkt, node)
        if pkt.dst == BROADCAST:
            self._deliver(pkt)
            self.routes.on_control(node, pkt, link)
        elif pkt.dst == node:
            self._deliver(pkt)
            if pkt.kind.startswith("control"):
                self.routes.on_control(node, pkt, link)
            app = self.apps.get(pkt.flow_id)
            if app is not None:
                if pkt.kind in ("data-udp", "data-tcp-segment", "icmp-echo"):
                    self.metrics.record(MetricPoint(
                        self.now, node, "latency_s", (self.clock.now - pkt.created_ns) / NS,
                        (("flow", pkt.flow_id),)))
                app.on_deliver(pkt, node)
        else:
            self._forward(pkt, node)

    def _deliver(self, pkt: Packet) -> None:
        pkt.recv_ns = self.clock.now
        self.counters["delivered"] += 1

    def _apply_event(self, ev) -> None:
        self.pathloss[(ev.src, ev.dst)] = ev.pathloss
        self.routes.on_link_event(ev.src, ev.dst, ev.pathloss)

    # -- main loop -----------------------------------------------------------

    def _sample(self, t_ns: int) -> None:
        taken = self._sampler.take(self, t_ns / NS)
        self.samples.extend(taken)
        record_samples(self.metrics, taken)

    def run(self) -> RunTrace:
        if self._ran:
            raise EmulationError("an Emulator instance runs once")
        self._ran = True
        for ev in self.eventlog:
            if self.network.link(ev.src, ev.dst) is None:
                raise EmulationConfigError(f"event targets undeclared link {ev.src}->{ev.dst}")
            self.at(ev.time_us * 1000, self._apply_event, ev)
        self.routes.start(self)
        for app in self.apps.values():
            app.start(self)
        next_sample = self._period_ns
        while self.clock.peek() is not None and self.clock.peek() <= self.end_ns:
            t = self.clock.peek()
            while next_sample < t:
                self.clock.now = next_sample
                self._sample(next_sample)
                next_sample += self._period_ns
            fn, args = self.clock.pop()
            fn(*args)
        while next_sample <= self.end_ns:
            self.clock.now = next_sample
            self._sample(next_sample)
            next_sample += self._period_ns
        if next_sample - self._period_ns < self.end_ns:
            self.clock.now = self.end_ns
            self._sample(self.end_ns)
        self.clock.now = self.end_ns
        for pkt in self.packets:
            if pkt.recv_ns is None and pkt.drop_reason is None:
                self.counters["in_flight"] += 1
        for app in self.apps.values():
            app.finish(self)
        tables = self.routes.tables()
        dump = self.routes.dump() if hasattr(self.routes, "dump") else ""
        return RunTrace(self.duration, self.seed, self.packets, dict(self.counters),
                        {fid: app.record for fid, app in self.apps.items()},
                        self.samples, self.metrics, tables, dump)


def run(network: Network, eventlog: EventLog | None, route_provider,
        traffic_sources: Sequence = (), duration: float = 60.0, seed: int = 0,
        monitoring_period: float = 1.0,
        transport: Iterable[str] = ("broadcast", "multicast", "unicast")) -> RunTrace:
    """Run one scenario to ``duration`` seconds of emulated time."""
    emu = Emulator(network, eventlog, route_provider, traffic_sources, duration, seed,
                   monitoring_period, transport)
    return emu.run()

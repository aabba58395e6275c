"""Load generators (ping-, iperf- and mgen-style) and flow measurement.

Generators run inside the emulator loop. Every flow keeps one
:class:`PacketOutcome` per application packet; :func:`summarize` turns those
into throughput, latency, jitter and loss over the measurement window.
"""
from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .dists import sample_gap

NS = 1_000_000_000
ACK_BYTES = 40
MIN_RTO = 0.01
INITIAL_SRTT = 0.5


@dataclass
class PacketOutcome:
    seq: int
    packet_id: int
    sent_s: float
    size: int
    recv_s: float | None = None
    drop_reason: str | None = None
    rtt_s: float | None = None


@dataclass
class FlowRecord:
    flow_id: int
    rule: object
    outcomes: list[PacketOutcome] = field(default_factory=list)
    offered_bytes: int = 0
    acked_bytes: int = 0
    retransmissions: int = 0

    @property
    def is_ping(self) -> bool:
        return self.rule.app == "ping"

    def delivered(self, o: PacketOutcome) -> bool:
        return (o.rtt_s is not None) if self.is_ping else (o.recv_s is not None)

    def rtts(self) -> list[float]:
        return [o.rtt_s for o in self.outcomes if o.rtt_s is not None]

    def to_dict(self) -> dict:
        r = self.rule
        return {
            "flow_id": self.flow_id, "src": r.src, "dst": r.dst, "app": r.app,
            "transport": r.transport, "offered_bytes": self.offered_bytes,
            "acked_bytes": self.acked_bytes, "retransmissions": self.retransmissions,
            "outcomes": [[o.seq, o.packet_id, o.sent_s, o.size, o.recv_s, o.drop_reason,
                          o.rtt_s] for o in self.outcomes],
        }


class _Generator:
    """Shared timer logic: first packet at ``start``, then renewal gaps until ``stop``."""

    def __init__(self, flow_id: int, rule):
        self.flow_id = flow_id
        self.rule = rule
        self.record = FlowRecord(flow_id, rule)
        self.emu = None
        self._seq = 0

    def start(self, emu) -> None:
        self.emu = emu
        self.rng = emu.rng("traffic", self.flow_id)
        self._stop_ns = round(self.rule.stop * NS)
        first = round(self.rule.start * NS)
        self._t = first
        emu.at(first, self._tick)

    def _tick(self) -> None:
        self.emit(self._seq)
        self._seq += 1
        self._t += round(sample_gap(self.rule.interarrival, self.rng) * NS)
        if self._t < self._stop_ns:
            self.emu.at(self._t, self._tick)

    def _outcome(self, seq: int, pkt) -> PacketOutcome:
        o = PacketOutcome(seq, pkt.id, self.emu.now, pkt.size)
        self.record.outcomes.append(o)
        return o

    def on_drop(self, packet, reason: str) -> None:
        pass

    def finish(self, emu) -> None:
        for o in self.record.outcomes:
            if not self.record.delivered(o) and o.drop_reason is None:
                o.drop_reason = "in-flight"


class UdpFlow(_Generator):
    """Open-loop datagrams at the interarrival pattern (iperf -u, mgen UDP)."""

    def __init__(self, flow_id, rule):
        super().__init__(flow_id, rule)
        self._by_seq: dict[int, PacketOutcome] = {}

    def emit(self, seq: int) -> None:
        pkt = self.emu.new_packet(self.flow_id, self.rule.src, self.rule.dst,
                                  self.rule.packet_size, "data-udp", seq=seq)
        self._by_seq[seq] = self._outcome(seq, pkt)
        self.record.offered_bytes += pkt.size
        self.emu.send(pkt)

    def on_deliver(self, packet, node: int) -> None:
        self._by_seq[packet.seq].recv_s = self.emu.now

    def on_drop(self, packet, reason: str) -> None:
        self._by_seq[packet.seq].drop_reason = reason


class PingApp(_Generator):
    """ICMP echo per tick; the destination replies immediately."""

    def __init__(self, flow_id, rule):
        super().__init__(flow_id, rule)
        self._by_seq: dict[int, PacketOutcome] = {}
        self._echo_ns: dict[int, int] = {}

    def emit(self, seq: int) -> None:
        pkt = self.emu.new_packet(self.flow_id, self.rule.src, self.rule.dst,
                                  self.rule.packet_size, "icmp-echo", seq=seq)
        self._by_seq[seq] = self._outcome(seq, pkt)
        self._echo_ns[seq] = pkt.created_ns
        self.record.offered_bytes += pkt.size
        self.emu.send(pkt)

    def on_deliver(self, packet, node: int) -> None:
        o = self._by_seq[packet.seq]
        if packet.kind == "icmp-echo":
            o.recv_s = self.emu.now
            reply = self.emu.new_packet(self.flow_id, packet.dst, packet.src, packet.size,
                                        "icmp-reply", seq=packet.seq)
            self.emu.send(reply)
        else:
            o.rtt_s = (self.emu.now_ns - self._echo_ns[packet.seq]) / NS

    def on_drop(self, packet, reason: str) -> None:
        self._by_seq[packet.seq].drop_reason = reason

    def rtt_series(self) -> list[float]:
        return self.record.rtts()


class TcpFlow(_Generator):
    """Window-limited reliable transfer with per-segment acks.

    The application writes one segment per tick into a send buffer; at most
    ``window`` segments are unacknowledged at once. A segment is resent when
    its ack has not arrived within twice the smoothed RTT.
    """

    def __init__(self, flow_id, rule):
        super().__init__(flow_id, rule)
        self._backlog: deque[int] = deque()
        self._inflight: set[int] = set()
        self._tx_count: dict[int, int] = {}
        self._tx_time: dict[int, int] = {}
        self._received: set[int] = set()
        self._by_seq: dict[int, PacketOutcome] = {}
        self.srtt: float | None = None

    @property
    def rto(self) -> float:
        return max(MIN_RTO, 2 * (self.srtt if self.srtt is not None else INITIAL_SRTT))

    def emit(self, seq: int) -> None:
        self.record.offered_bytes += self.rule.packet_size
        self._backlog.append(seq)
        self._pump()

    def _pump(self) -> None:
        while self._backlog and len(self._inflight) < self.rule.window:
            seq = self._backlog.popleft()
            self._inflight.add(seq)
            self._transmit(seq)

    def _transmit(self, seq: int) -> None:
        emu = self.emu
        pkt = emu.new_packet(self.flow_id, self.rule.src, self.rule.dst,
                             self.rule.packet_size, "data-tcp-segment", seq=seq)
        count = self._tx_count.get(seq, 0) + 1
        self._tx_count[seq] = count
        self._tx_time[seq] = emu.now_ns
        if count == 1:
            self._by_seq[seq] = self._outcome(seq, pkt)
        else:
            self.record.retransmissions += 1
        emu.after(self.rto, self._timeout, seq, count)
        emu.send(pkt)

    def _timeout(self, seq: int, count: int) -> None:
        if seq in self._inflight and self._tx_count[seq] == count:
            self._transmit(seq)

    def on_deliver(self, packet, node: int) -> None:
        emu = self.emu
        if packet.kind == "data-tcp-segment":
            if packet.seq not in self._received:
                self._received.add(packet.seq)
                o = self._by_seq[packet.seq]
                o.recv_s = emu.now
                o.drop_reason = None
            ack = emu.new_packet(self.flow_id, packet.dst, packet.src, ACK_BYTES, "tcp-ack",
                                 seq=packet.seq)
            emu.send(ack)
            return
        seq = packet.seq
        if seq not in self._inflight:
            return
        self._inflight.discard(seq)
        self.record.acked_bytes += self.rule.packet_size
        if self._tx_count[seq] == 1:
            sample = (emu.now_ns - self._tx_time[seq]) / NS
            self.srtt = sample if self.srtt is None else 0.875 * self.srtt + 0.125 * sample
        self._pump()

    def on_drop(self, packet, reason: str) -> None:
        if packet.kind == "data-tcp-segment" and packet.seq not in self._received:
            self._by_seq[packet.seq].drop_reason = reason


def make_app(flow_id: int, rule):
    """Generator for a traffic rule: ping, TCP (iperf/mgen) or UDP (iperf/mgen)."""
    if rule.app == "ping":
        return PingApp(flow_id, rule)
    if rule.transport == "tcp":
        return TcpFlow(flow_id, rule)
    return UdpFlow(flow_id, rule)


ping_app = PingApp
iperf_app = mgen_app = make_app


# ------------------------------------------------------------- measurement


def compute_jitter(latencies) -> float | None:
    """Mean absolute difference of consecutive latencies; ``None`` below two."""
    lat = np.asarray(list(latencies), dtype=float)
    if lat.size < 2:
        return None
    return float(np.mean(np.abs(np.diff(lat))))


@dataclass(frozen=True)
class MetricSummary:
    flow_id: int
    src: int
    dst: int
    app: str
    sent: int
    delivered: int
    loss_rate: float
    throughput_bps: float
    mean_latency_s: float | None
    p95_latency_s: float | None
    jitter_s: float | None
    rtt_min_s: float | None = None
    rtt_mean_s: float | None = None
    rtt_max_s: float | None = None

    @property
    def delivered_fraction(self) -> float:
        return self.delivered / self.sent if self.sent else 0.0


@dataclass(frozen=True)
class NodeAggregate:
    node: int
    flows_out: int
    sent: int
    delivered_out: int
    bits_in: int


@dataclass(frozen=True)
class TrafficSummary:
    flows: dict
    nodes: dict


def summarize_flow(record: FlowRecord, warmup: float = 0.0) -> MetricSummary:
    rule = record.rule
    t0 = rule.start + warmup
    if t0 >= rule.stop:
        t0 = rule.start
    window = rule.stop - t0
    picked = [o for o in record.outcomes if t0 <= o.sent_s < rule.stop]
    picked.sort(key=lambda o: o.seq)
    got = [o for o in picked if record.delivered(o)]
    sent = len(picked)
    lat = [o.recv_s - o.sent_s for o in got if o.recv_s is not None]
    rtts = [o.rtt_s for o in got if o.rtt_s is not None]
    bits = 8 * sum(o.size for o in got)
    return MetricSummary(
        flow_id=record.flow_id, src=rule.src, dst=rule.dst, app=rule.app,
        sent=sent, delivered=len(got),
        loss_rate=(sent - len(got)) / sent if sent else 0.0,
        throughput_bps=bits / window,
        mean_latency_s=float(np.mean(lat)) if lat else None,
        p95_latency_s=float(np.percentile(lat, 95)) if lat else None,
        jitter_s=compute_jitter(lat),
        rtt_min_s=min(rtts) if rtts else None,
        rtt_mean_s=float(np.mean(rtts)) if rtts else None,
        rtt_max_s=max(rtts) if rtts else None,
    )


def summarize(records, warmup: float = 0.0) -> TrafficSummary:
    """Per-flow summaries plus per-node totals (``records``: iterable or id->record)."""
    if isinstance(records, dict):
        records = records.values()
    records = sorted(records, key=lambda r: r.flow_id)
    flows = {r.flow_id: summarize_flow(r, warmup) for r in records}
    acc: dict[int, list[int]] = {}
    for r in records:
        s = flows[r.flow_id]
        src = acc.setdefault(r.rule.src, [0, 0, 0, 0])
        src[0] += 1
        src[1] += s.sent
        src[2] += s.delivered
        dst = acc.setdefault(r.rule.dst, [0, 0, 0, 0])
        dst[3] += round(s.throughput_bps * (r.rule.stop - max(r.rule.start, 0.0)))
    nodes = {n: NodeAggregate(n, *v) for n, v in sorted(acc.items())}
    return TrafficSummary(flows, nodes)


SUMMARY_COLUMNS = ("flow_id", "src", "dst", "app", "sent", "delivered", "loss_rate",
                   "throughput_bps", "mean_latency_s", "p95_latency_s", "jitter_s")


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else v


def summary_csv(summary: TrafficSummary | dict) -> str:
    flows = summary.flows if isinstance(summary, TrafficSummary) else summary
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for fid in sorted(flows):
        s = flows[fid]
        w.writerow([_cell(getattr(s, c)) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def summary_json(summary: TrafficSummary) -> str:
    doc = {
        "flows": [asdict(summary.flows[f]) for f in sorted(summary.flows)],
        "nodes": [asdict(summary.nodes[n]) for n in sorted(summary.nodes)],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"

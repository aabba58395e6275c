"""Control planes producing (destination, gateway, out-port) forwarding entries.

Supported per node, possibly several at once:

* ``static``: explicit routes, or shortest paths over the graph at t=0.
* ``olsr`` / ``ospf``: proactive link state. Hellos find symmetric
  neighbours, LSAs are fully flooded with sequence numbers, and every change
  re-runs SPF. The two differ only in name and default preference.
* ``centralized``: a controller with the true current graph recomputes all
  tables at start and after every link event.

When several protocols offer a route, the lowest preference wins and ties
go to the lowest gateway address.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .topology import Network, data_address

LINK_STATE = ("olsr", "ospf")
HELLO_BYTES, HELLO_PER_NEIGHBOR = 24, 4
LSA_BYTES, LSA_PER_LINK = 32, 8


@dataclass(frozen=True)
class RouteEntry:
    destination: int
    gateway: int
    out_port: int
    origin_protocol: str
    preference: int
    cost: float = 1.0

    @property
    def destination_address(self) -> str:
        return data_address(self.destination)

    @property
    def gateway_address(self) -> str:
        return data_address(self.gateway)


def _rank(e: RouteEntry):
    return (e.preference, e.cost, e.gateway, e.out_port, e.origin_protocol)


def select_route(candidates: Iterable[RouteEntry]) -> RouteEntry:
    """Best of several entries for one destination."""
    return min(candidates, key=_rank)


@dataclass
class RouteTable:
    node: int
    entries: dict[int, RouteEntry] = field(default_factory=dict)
    alternates: dict[int, tuple[RouteEntry, ...]] = field(default_factory=dict)

    def lookup(self, dest: int) -> RouteEntry | None:
        return self.entries.get(dest)

    def first_hops(self) -> dict[int, int]:
        return {d: e.gateway for d, e in sorted(self.entries.items())}

    def forwarding(self) -> dict[int, tuple[int, int]]:
        return {d: (e.gateway, e.out_port) for d, e in sorted(self.entries.items())}

    @classmethod
    def merge(cls, node: int, tables: Iterable["RouteTable"]) -> "RouteTable":
        by_dest: dict[int, list[RouteEntry]] = {}
        for t in tables:
            for d, e in t.entries.items():
                by_dest.setdefault(d, []).append(e)
        entries, alternates = {}, {}
        for d in sorted(by_dest):
            ranked = sorted(by_dest[d], key=_rank)
            entries[d] = ranked[0]
            if len(ranked) > 1:
                alternates[d] = tuple(ranked[1:])
        return cls(node, entries, alternates)


class LinkStateDb:
    """One node's view: the latest advertisement from each origin."""

    def __init__(self):
        self._lsas: dict[int, tuple[int, tuple[tuple[int, float], ...], float]] = {}

    @classmethod
    def from_links(cls, links: Iterable[tuple[int, int, float]], seq: int = 0) -> "LinkStateDb":
        grouped: dict[int, list[tuple[int, float]]] = {}
        for s, d, c in links:
            grouped.setdefault(s, []).append((d, float(c)))
        db = cls()
        for origin, adj in grouped.items():
            db.update(origin, seq, adj, 0.0)
        return db

    def update(self, origin: int, seq: int, links: Iterable[tuple[int, float]],
               now: float) -> bool:
        """Store an advertisement if it is newer; return whether it was."""
        cur = self._lsas.get(origin)
        if cur is not None and seq <= cur[0]:
            return False
        links = tuple(sorted((int(d), float(c)) for d, c in links))
        for _, c in links:
            if not c > 0:
                raise ValueError("link costs must be positive")
        self._lsas[origin] = (seq, links, now)
        return True

    def sequence(self, origin: int) -> int | None:
        cur = self._lsas.get(origin)
        return None if cur is None else cur[0]

    def expire(self, now: float, max_age: float, keep: int | None = None) -> bool:
        stale = [o for o, (_, _, t) in self._lsas.items()
                 if o != keep and now - t >= max_age]
        for o in stale:
            del self._lsas[o]
        return bool(stale)

    def links(self) -> set[tuple[int, int, float, int]]:
        return {(o, d, c, seq) for o, (seq, adj, _) in self._lsas.items() for d, c in adj}

    def adjacency(self) -> dict[int, tuple[tuple[int, float], ...]]:
        return {o: adj for o, (_, adj, _) in sorted(self._lsas.items())}

    def topology(self) -> set[tuple[int, int, float]]:
        return {(s, d, c) for s, d, c, _ in self.links()}

    def __eq__(self, other) -> bool:
        return isinstance(other, LinkStateDb) and self.topology() == other.topology()


def _port_lookup(ports):
    if ports is None:
        return lambda s, d: -1
    if isinstance(ports, Network):
        return lambda s, d: ports.link(s, d).id
    return lambda s, d: ports[(s, d)]


def spf(db: LinkStateDb, src: int, ports: Network | Mapping | None = None,
        protocol: str = "ospf", preference: int = 110) -> RouteTable:
    """Dijkstra from ``src``; equal-cost paths resolve to the lowest first hop.

    Labels are ``(distance, first_hop)`` compared lexicographically, which
    is exact because every link cost is positive.
    """
    adj = db.adjacency()
    port_of = _port_lookup(ports)
    best: dict[int, tuple[float, int]] = {src: (0.0, -1)}
    done: set[int] = set()
    heap = [(0.0, -1, src)]
    while heap:
        dist, fh, u = heapq.heappop(heap)
        if u in done or best.get(u) != (dist, fh):
            continue
        done.add(u)
        for v, c in adj.get(u, ()):
            cand = (dist + c, v if u == src else fh)
            if v not in done and (v not in best or cand < best[v]):
                best[v] = cand
                heapq.heappush(heap, (cand[0], cand[1], v))
    entries = {}
    for dest in sorted(best):
        if dest == src:
            continue
        dist, gw = best[dest]
        entries[dest] = RouteEntry(dest, gw, port_of(src, gw), protocol, preference, dist)
    return RouteTable(src, entries)


def current_db(network: Network, link_up=None) -> LinkStateDb:
    """Omniscient database of every link that is currently usable."""
    up = link_up or (lambda s, d: True)
    return LinkStateDb.from_links((l.src, l.dst, 1.0) for l in network.links
                                  if up(l.src, l.dst))


def centralized_compute(network: Network, link_up=None, nodes: Iterable[int] | None = None,
                        protocol: str = "centralized", preference: int = 10
                        ) -> dict[int, RouteTable]:
    """Tables for ``nodes`` (default all) from the true current graph."""
    db = current_db(network, link_up)
    nodes = network.nodes if nodes is None else nodes
    return {n: spf(db, n, network, protocol, preference) for n in nodes}


def route_dump(tables: Mapping[int, RouteTable]) -> str:
    """``node=<i> dest=<addr> gw=<addr> port=<id> proto=<p> pref=<n>`` per line."""
    lines = []
    for node in sorted(tables):
        for dest in sorted(tables[node].entries):
            e = tables[node].entries[dest]
            lines.append(f"node={node} dest={e.destination_address} gw={e.gateway_address} "
                         f"port={e.out_port} proto={e.origin_protocol} pref={e.preference}")
    return "".join(line + "\n" for line in lines)


def has_loop(tables: Mapping[int, RouteTable], n_nodes: int) -> bool:
    """True if following best gateways ever revisits a node before arrival."""
    for src in tables:
        for dest in tables[src].entries:
            node, seen = src, {src}
            while node != dest:
                entry = tables.get(node) and tables[node].lookup(dest)
                if entry is None:
                    break
                node = entry.gateway
                if node in seen:
                    return True
                seen.add(node)
    return False


# ------------------------------------------------------------ control plane


class _Instance:
    protocol: str

    def __init__(self, plane: "RoutingPlane", node: int, rule):
        self.plane = plane
        self.node = node
        self.rule = rule
        self.protocol = rule.protocol
        self.table = RouteTable(node)

    def install(self, table: RouteTable) -> None:
        if table.forwarding() != self.table.forwarding() or \
                {d: e.preference for d, e in table.entries.items()} != \
                {d: e.preference for d, e in self.table.entries.items()}:
            self.table = table
            self.plane._installed(self.node, self.protocol, table)


class _StaticInstance(_Instance):
    def start(self, emu) -> None:
        net = self.plane.network
        if self.rule.routes:
            entries = {}
            for node, dest, gw in self.rule.routes:
                if node == self.node:
                    entries[dest] = RouteEntry(dest, gw, net.link(node, gw).id, "static",
                                               self.rule.preference)
            self.install(RouteTable(self.node, entries))
        else:
            db = current_db(net, emu.link_up)
            self.install(spf(db, self.node, net, "static", self.rule.preference))


class _LinkStateInstance(_Instance):
    """Hello/flood/SPF state machine for one protocol on one node."""

    def __init__(self, plane, node, rule):
        super().__init__(plane, node, rule)
        self.heard: dict[int, tuple[int, bool]] = {}
        self.sym: frozenset[int] = frozenset()
        self.db = LinkStateDb()
        self.seq = 0
        self.emu = None

    def start(self, emu) -> None:
        self.emu = emu
        self.originate()
        emu.at(emu.now_ns, self.hello)
        emu.after(self.rule.refresh_interval, self.refresh)

    def hello(self) -> None:
        emu = self.emu
        heard = sorted(self.heard)
        emu.broadcast(self.node, "control-hello", HELLO_BYTES + HELLO_PER_NEIGHBOR * len(heard),
                      {"proto": self.protocol, "type": "hello", "heard": heard})
        emu.after(self.rule.hello_interval, self.hello)

    def on_hello(self, sender: int, heard: Sequence[int]) -> None:
        emu = self.emu
        self.heard[sender] = (emu.now_ns, self.node in heard)
        emu.after(self.rule.hold_time, self._expire, sender)
        self._neighbors_changed()

    def _expire(self, sender: int) -> None:
        last = self.heard.get(sender)
        hold_ns = round(self.rule.hold_time * 1e9)
        if last is not None and self.emu.now_ns - last[0] >= hold_ns:
            del self.heard[sender]
            self._neighbors_changed()

    def _neighbors_changed(self) -> None:
        sym = frozenset(n for n, (_, s) in self.heard.items() if s)
        if sym != self.sym:
            self.sym = sym
            self.originate()

    def originate(self) -> None:
        self.seq += 1
        links = [(n, 1.0) for n in sorted(self.sym)]
        self.db.update(self.node, self.seq, links, self.emu.now)
        self._flood({"proto": self.protocol, "type": "lsa", "origin": self.node,
                     "seq": self.seq, "links": links})
        self.recompute()

    def _flood(self, payload) -> None:
        self.emu.broadcast(self.node, "control-lsa",
                           LSA_BYTES + LSA_PER_LINK * len(payload["links"]), payload)

    def on_lsa(self, payload) -> None:
        if self.db.update(payload["origin"], payload["seq"], payload["links"], self.emu.now):
            self._flood(payload)
            self.recompute()

    def refresh(self) -> None:
        self.db.expire(self.emu.now, self.rule.lsa_max_age, keep=self.node)
        self.originate()
        self.emu.after(self.rule.refresh_interval, self.refresh)

    def recompute(self) -> None:
        self.install(spf(self.db, self.node, self.plane.network, self.protocol,
                         self.rule.preference))


class _Controller:
    """Centralized mode: one global recomputation serving a node group."""

    protocol = "centralized"

    def __init__(self, plane: "RoutingPlane", rule, nodes: Sequence[int]):
        self.plane = plane
        self.rule = rule
        self.nodes = tuple(nodes)
        self.instances = {n: _Instance(plane, n, rule) for n in self.nodes}
        self.emu = None

    def start(self, emu) -> None:
        self.emu = emu
        self.recompute()

    def recompute(self) -> None:
        tables = centralized_compute(self.plane.network, self.emu.link_up, self.nodes,
                                     "centralized", self.rule.preference)
        for n, t in tables.items():
            self.instances[n].install(t)


class RoutingPlane:
    """Route provider for the emulator.

    ``protocols`` maps each node to the routing rules that apply to it (as
    produced by scenario expansion). ``changes`` records ``(t_s, node,
    protocol)`` each time a protocol installs a different table.
    """

    def __init__(self, network: Network, protocols: Mapping[int, Sequence]):
        self.network = network
        self.instances: dict[tuple[int, str], _Instance] = {}
        self.controllers: list[_Controller] = []
        self.changes: list[tuple[float, int, str]] = []
        self._merged: dict[int, RouteTable] = {}
        self.emu = None
        central: dict[int, tuple] = {}
        for node in network.nodes:
            for rule in protocols.get(node, ()):
                if (node, rule.protocol) in self.instances:
                    raise ValueError(f"protocol {rule.protocol} twice on node {node}")
                if rule.protocol == "centralized":
                    central.setdefault(id(rule), (rule, []))[1].append(node)
                    continue
                cls = _StaticInstance if rule.protocol == "static" else _LinkStateInstance
                self.instances[(node, rule.protocol)] = cls(self, node, rule)
        for rule, nodes in central.values():
            ctl = _Controller(self, rule, nodes)
            self.controllers.append(ctl)
            for n, inst in ctl.instances.items():
                self.instances[(n, "centralized")] = inst

    @property
    def uses_broadcast(self) -> bool:
        return any(isinstance(i, _LinkStateInstance) for i in self.instances.values())

    def _installed(self, node: int, protocol: str, table: RouteTable) -> None:
        self._merged.pop(node, None)
        t = self.emu.now if self.emu is not None else 0.0
        self.changes.append((t, node, protocol))

    # -- route provider interface -------------------------------------------

    def start(self, emu) -> None:
        self.emu = emu
        for ctl in self.controllers:
            ctl.start(emu)
        for key in sorted(self.instances):
            inst = self.instances[key]
            if not isinstance(inst, _Instance) or type(inst) is _Instance:
                continue
            inst.start(emu)

    def lookup(self, node: int, dest: int) -> RouteEntry | None:
        table = self._merged.get(node)
        if table is None:
            table = self._merged[node] = self.table(node)
        return table.lookup(dest)

    def on_control(self, node: int, packet, link) -> None:
        payload = packet.payload or {}
        inst = self.instances.get((node, payload.get("proto")))
        if not isinstance(inst, _LinkStateInstance):
            return
        if payload.get("type") == "hello":
            inst.on_hello(link.src, payload["heard"])
        elif payload.get("type") == "lsa":
            inst.on_lsa(payload)

    def on_link_event(self, src: int, dst: int, pathloss: float) -> None:
        for ctl in self.controllers:
            ctl.recompute()

    def table(self, node: int) -> RouteTable:
        return RouteTable.merge(node, (inst.table for (n, _), inst in
                                       sorted(self.instances.items()) if n == node))

    def tables(self) -> dict[int, RouteTable]:
        return {n: self.table(n) for n in self.network.nodes}

    def protocol_tables(self, protocol: str) -> dict[int, RouteTable]:
        return {n: inst.table for (n, p), inst in sorted(self.instances.items())
                if p == protocol}

    def databases(self, protocol: str) -> dict[int, LinkStateDb]:
        return {n: inst.db for (n, p), inst in sorted(self.instances.items())
                if p == protocol and isinstance(inst, _LinkStateInstance)}

    def dump(self) -> str:
        return route_dump(self.tables())

"""Network graph: nodes, directed links and the structures that generate them.

A network is a weighted directed graph without multiple edges. The "weight"
of a link is its :class:`LinkParams` record; routing treats every link as
cost 1 unless told otherwise.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .config import LinkRule, TopologySpec

STRUCTURES = ("ring", "full-mesh", "random", "predefined")
MAC_KINDS = ("rf-pipe", "csma", "tdma", "auto")


class TopologyError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _dotted(prefix: tuple[int, int], index: int) -> str:
    host = index + 1
    return f"{prefix[0]}.{prefix[1]}.{host >> 8}.{host & 0xFF}"


def data_address(node: int) -> str:
    """Label for node ``node`` on the emulated data network (10.100.0.1 for node 0)."""
    return _dotted((10, 100), node)


def mgmt_address(node: int) -> str:
    """Label for node ``node`` on the management network."""
    return _dotted((172, 16), node)


def address_key(address: str) -> tuple[int, ...]:
    return tuple(int(p) for p in address.split("."))


@dataclass(frozen=True)
class LinkParams:
    capacity: float = 54e6
    prop_delay: float = 0.001
    initial_pathloss: float = 80.0
    rx_threshold: float = 100.0
    mac: str = "rf-pipe"
    fixed_delay: float = 0.0
    queue_limit: int = 50
    slot_len: float = 0.01
    slots_per_frame: int = 10

    def __post_init__(self):
        if not self.capacity > 0:
            raise TopologyError("E_CAPACITY", "capacity must be positive")
        if self.prop_delay < 0 or self.fixed_delay < 0:
            raise TopologyError("E_DELAY", "delays must be non-negative")
        if self.mac not in MAC_KINDS:
            raise TopologyError("E_MAC", f"unknown mac {self.mac!r}")
        if self.queue_limit < 1:
            raise TopologyError("E_QUEUE", "queue_limit must be >= 1")
        if self.mac == "tdma" and not (self.slot_len > 0 and self.slots_per_frame >= 1):
            raise TopologyError("E_TDMA_PARAMS", "tdma needs slot_len > 0 and slots_per_frame >= 1")


@dataclass(frozen=True)
class Selector:
    """Which directed links (or nodes) a rule applies to.

    ``all`` matches everything; ``nodes`` matches links with both endpoints in
    the group; ``pairs`` matches exactly the listed ordered pairs.
    """

    kind: str = "all"
    nodes: tuple[int, ...] = ()
    pairs: tuple[tuple[int, int], ...] = ()

    def matches(self, src: int, dst: int) -> bool:
        if self.kind == "all":
            return True
        if self.kind == "nodes":
            return src in self.nodes and dst in self.nodes
        return (src, dst) in self.pairs

    def node_set(self, n_nodes: int) -> tuple[int, ...]:
        if self.kind == "all":
            return tuple(range(n_nodes))
        if self.kind == "nodes":
            return self.nodes
        return tuple(sorted({x for p in self.pairs for x in p}))

    def referenced(self) -> set[int]:
        return set(self.nodes) | {x for p in self.pairs for x in p}

    def to_yaml(self):
        if self.kind == "all":
            return "all"
        if self.kind == "nodes":
            return {"nodes": list(self.nodes)}
        return {"pairs": [list(p) for p in self.pairs]}


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    params: LinkParams = field(default_factory=LinkParams)


@dataclass(frozen=True)
class Network:
    n_nodes: int
    links: tuple[Link, ...]
    _by_pair: dict = field(init=False, repr=False, compare=False)
    _out: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_pair, out = {}, defaultdict(list)
        for i, link in enumerate(self.links):
            if link.id != i:
                raise TopologyError("E_LINK_ID", "link ids must be dense and ordered")
            if link.src == link.dst:
                raise TopologyError("E_SELF_LOOP", f"self loop on node {link.src}")
            for end in (link.src, link.dst):
                if not 0 <= end < self.n_nodes:
                    raise TopologyError("E_UNKNOWN_NODE", f"link endpoint {end} is not a node")
            if (link.src, link.dst) in by_pair:
                raise TopologyError(
                    "E_MULTI_EDGE", f"duplicate link {link.src}->{link.dst}"
                )
            by_pair[(link.src, link.dst)] = link
            out[link.src].append(link)
        object.__setattr__(self, "_by_pair", by_pair)
        object.__setattr__(self, "_out", dict(out))

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    def link(self, src: int, dst: int) -> Link | None:
        return self._by_pair.get((src, dst))

    def out_links(self, node: int) -> list[Link]:
        return self._out.get(node, [])

    def neighbors(self, node: int) -> set[int]:
        """Nodes sharing a link with ``node`` in either direction."""
        return {l.dst for l in self.out_links(node)} | {
            l.src for l in self.links if l.dst == node
        }

    def pairs(self) -> set[tuple[int, int]]:
        return set(self._by_pair)


def _structure_pairs(structure: str, n: int, rng, random_p, edges) -> list[tuple]:
    if structure == "ring":
        if n < 2:
            raise TopologyError("E_RING_SIZE", "a ring needs at least 2 nodes")
        pairs = set()
        for i in range(n):
            j = (i + 1) % n
            pairs.add((i, j))
            pairs.add((j, i))
        return [(s, d, None) for s, d in sorted(pairs)]
    if structure == "full-mesh":
        return [(s, d, None) for s in range(n) for d in range(n) if s != d]
    if structure == "random":
        if random_p is None or not 0.0 <= random_p <= 1.0:
            raise TopologyError("E_RANDOM_P", "random structure needs random_p in [0, 1]")
        out = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < random_p:
                    out += [(i, j, None), (j, i, None)]
        return out
    if structure == "predefined":
        if edges is None:
            raise TopologyError("E_EDGES", "predefined structure needs an edge list")
        seen = set()
        for e in edges:
            key = (e.src, e.dst)
            if key in seen:
                raise TopologyError("E_MULTI_EDGE", f"duplicate link {e.src}->{e.dst}")
            seen.add(key)
        return [(e.src, e.dst, e) for e in edges]
    raise TopologyError("E_STRUCTURE", f"unknown structure {structure!r}")


def params_for(src: int, dst: int, rules: Sequence["LinkRule"]) -> LinkParams:
    """Parameters of the last rule matching ``src -> dst``, else defaults."""
    params = LinkParams()
    for rule in rules:
        if rule.selector.matches(src, dst):
            params = rule.params
    return params


def build(
    topology: "TopologySpec",
    link_rules: Sequence["LinkRule"],
    rng: np.random.Generator | None = None,
    n_nodes: int | None = None,
) -> Network:
    """Materialize the graph for a topology whose node count is resolved.

    ``n_nodes`` defaults to ``topology.num_nodes`` when that is an integer.
    """
    n = topology.num_nodes if n_nodes is None else n_nodes
    if not isinstance(n, int) or n < 1:
        raise TopologyError("E_NODE_COUNT", f"node count must be a positive integer, got {n!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    raw = _structure_pairs(topology.structure, n, rng, topology.random_p, topology.edges)
    raw.sort(key=lambda t: (t[0], t[1]))
    links = []
    for i, (src, dst, edge) in enumerate(raw):
        params = params_for(src, dst, link_rules)
        if edge is not None and edge.overrides:
            params = replace(params, **dict(edge.overrides))
        links.append(Link(i, src, dst, params))
    return Network(n, tuple(links))


def heterogeneity_check(network: Network) -> dict[str, list[Link]]:
    """Partition links by declared MAC kind. Empty network gives ``{}``."""
    parts: dict[str, list[Link]] = {}
    for link in network.links:
        parts.setdefault(link.params.mac, []).append(link)
    return dict(sorted(parts.items()))


@dataclass(frozen=True)
class EdgeSpec:
    """One directed link of a predefined topology, with optional overrides."""

    src: int
    dst: int
    overrides: tuple[tuple[str, float], ...] = ()

    def to_yaml(self):
        if not self.overrides:
            return [self.src, self.dst]
        d = {"src": self.src, "dst": self.dst}
        d.update(self.overrides)
        return d


_EDGE_FIELDS = ("capacity", "prop_delay", "initial_pathloss")


def parse_edge_list(text: str) -> list[EdgeSpec]:
    """Read ``src dst capacity_bps prop_delay_s pathloss_db`` lines; ``#`` comments."""
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise TopologyError("E_EDGE_FILE", f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            src, dst = int(parts[0]), int(parts[1])
            values = [float(x) for x in parts[2:]]
        except ValueError:
            raise TopologyError("E_EDGE_FILE", f"line {lineno}: malformed number") from None
        edges.append(EdgeSpec(src, dst, tuple(zip(_EDGE_FIELDS, values))))
    return edges


def load_edge_list(path: str | Path) -> list[EdgeSpec]:
    return parse_edge_list(Path(path).read_text(encoding="utf-8"))


def is_connected(n_nodes: int, pairs: Iterable[tuple[int, int]]) -> bool:
    """Strong connectivity check by forward and reverse reachability from node 0."""
    pairs = list(pairs)
    if n_nodes <= 1:
        return True
    fwd, rev = defaultdict(set), defaultdict(set)
    for s, d in pairs:
        fwd[s].add(d)
        rev[d].add(s)

    def reach(adj):
        seen, stack = {0}, [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n_nodes

    return reach(fwd) and reach(rev)

"""In-process time-series store and per-node resource sampling.

Points are written by the emulator's event loop and read back after the
run. Exports are plain CSV (``t_s,node,name,value,tags``) or JSON lines;
both round-trip through :meth:`MetricStore.load`.
"""
from __future__ import annotations

import bisect
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

CONTROLLER = "controller"


@dataclass(frozen=True, order=True)
class MetricPoint:
    t: float
    node: int | str
    name: str
    value: float
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("metric name must be non-empty")
        if self.t < 0:
            raise ValueError("metric time must be non-negative")
        object.__setattr__(self, "tags", tuple(sorted((str(k), str(v)) for k, v in
                                                      dict(self.tags).items())))


@dataclass(frozen=True)
class ResourceSample:
    t: float
    node: int
    cpu_proxy: int
    mem_proxy: int


def _tags_text(tags) -> str:
    return ";".join(f"{k}={v}" for k, v in tags)


def _tags_parse(text: str) -> tuple[tuple[str, str], ...]:
    if not text:
        return ()
    return tuple(tuple(kv.split("=", 1)) for kv in text.split(";"))


def _node_parse(text: str) -> int | str:
    return int(text) if text.lstrip("-").isdigit() else text


class MetricStore:
    """Append-mostly store keyed by metric name."""

    def __init__(self, points: Iterable[MetricPoint] = ()):
        self._series: dict[str, list[MetricPoint]] = {}
        for p in points:
            self.record(p)

    def record(self, point: MetricPoint) -> None:
        series = self._series.setdefault(point.name, [])
        if not series or series[-1].t <= point.t:
            series.append(point)
        else:
            # Keep time order; ties stay in insertion order.
            i = bisect.bisect_right([p.t for p in series], point.t)
            series.insert(i, point)

    def names(self) -> list[str]:
        return sorted(self._series)

    def query(self, name: str, node: int | str | None = None,
              t0: float | None = None, t1: float | None = None) -> list[MetricPoint]:
        """Points of ``name`` with ``t0 <= t <= t1``; unknown names give ``[]``."""
        out = []
        for p in self._series.get(name, ()):
            if node is not None and p.node != node:
                continue
            if t0 is not None and p.t < t0:
                continue
            if t1 is not None and p.t > t1:
                continue
            out.append(p)
        return out

    def points(self) -> list[MetricPoint]:
        return [p for name in self.names() for p in self._series[name]]

    def __len__(self) -> int:
        return sum(len(s) for s in self._series.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricStore) and self.points() == other.points()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "node", "name", "value", "tags"])
        for p in self.points():
            w.writerow([repr(p.t), p.node, p.name, repr(float(p.value)), _tags_text(p.tags)])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"t_s": p.t, "node": p.node, "name": p.name,
                        "value": float(p.value), "tags": dict(p.tags)}, sort_keys=True) + "\n"
            for p in self.points()
        )

    def export(self, path: str | Path, format: str = "csv") -> None:
        text = {"csv": self.to_csv, "json": self.to_jsonl, "jsonl": self.to_jsonl}[format]()
        Path(path).write_text(text, encoding="utf-8", newline="\n")

    @classmethod
    def from_csv(cls, text: str) -> "MetricStore":
        rows = csv.DictReader(io.StringIO(text))
        return cls(MetricPoint(float(r["t_s"]), _node_parse(r["node"]), r["name"],
                               float(r["value"]), _tags_parse(r["tags"])) for r in rows)

    @classmethod
    def from_jsonl(cls, text: str) -> "MetricStore":
        pts = []
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                pts.append(MetricPoint(d["t_s"], d["node"], d["name"], d["value"],
                                       tuple(d["tags"].items())))
        return cls(pts)

    @classmethod
    def load(cls, path: str | Path, format: str | None = None) -> "MetricStore":
        path = Path(path)
        format = format or ("csv" if path.suffix == ".csv" else "json")
        text = path.read_text(encoding="utf-8")
        return cls.from_csv(text) if format == "csv" else cls.from_jsonl(text)


class EmulatorState(Protocol):
    n_nodes: int

    def handled_total(self, node: int) -> int: ...

    def queued_bytes(self, node: int) -> int: ...


@dataclass
class ResourceSampler:
    """Turns cumulative per-node counters into per-period samples."""

    period: float
    _last: dict[int, int] = field(default_factory=dict)

    def take(self, state: EmulatorState, t: float) -> list[ResourceSample]:
        out = sample_resources(state, t, self._last)
        self._last = {n: state.handled_total(n) for n in range(state.n_nodes)}
        return out


def sample_resources(state: EmulatorState, t: float,
                     previous: Mapping[int, int] | None = None) -> list[ResourceSample]:
    """One sample per node: packets handled since ``previous`` counts, bytes queued now."""
    previous = previous or {}
    return [ResourceSample(t, n, state.handled_total(n) - previous.get(n, 0),
                           state.queued_bytes(n))
            for n in range(state.n_nodes)]


def record_samples(store: MetricStore, samples: Iterable[ResourceSample]) -> None:
    for s in samples:
        store.record(MetricPoint(s.t, s.node, "cpu_proxy", s.cpu_proxy))
        store.record(MetricPoint(s.t, s.node, "mem_proxy", s.mem_proxy))

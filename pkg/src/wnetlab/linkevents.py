"""Timed path-loss events and their EEL text form.

Line format, one event per line::

    <time_s> nem:<src> pathloss nem:<dst>,<loss_db>

Times are held as integer microseconds; the text uses decimal seconds with
at most six fractional digits. An event sets the current path loss of the
directed link ``src -> dst``.
"""
from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .dists import sample, sample_gap, substream
from .topology import Network

__all__ = [
    "LinkEvent", "EventLog", "EelError", "sample", "generate_events",
    "serialize_eel", "parse_eel", "import_precomputed", "write_eel",
]

log = logging.getLogger(__name__)

US = 1_000_000


class EelError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, order=True)
class LinkEvent:
    time_us: int
    src: int
    dst: int
    pathloss: float

    @property
    def time(self) -> float:
        return self.time_us / US


class EventLog:
    """Immutable, time-sorted sequence of :class:`LinkEvent`.

    Equal timestamps are ordered by ``(src, dst)``; exact duplicates keep
    their relative order.
    """

    __slots__ = ("_events",)

    def __init__(self, events: Iterable[LinkEvent] = ()):
        self._events = tuple(sorted(events, key=lambda e: (e.time_us, e.src, e.dst)))

    @property
    def events(self) -> tuple[LinkEvent, ...]:
        return self._events

    def __iter__(self):
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, i):
        return self._events[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, EventLog) and self._events == other._events

    def __hash__(self) -> int:
        return hash(self._events)

    def __repr__(self) -> str:
        return f"EventLog({len(self._events)} events)"

    def truncated(self, duration: float) -> "EventLog":
        limit = round(duration * US)
        return EventLog(e for e in self._events if e.time_us <= limit)


def _rule_key(rule) -> str:
    if rule.name:
        return rule.name
    return hashlib.sha256(repr(rule).encode()).hexdigest()[:16]


def generate_events(rules: Sequence, duration: float, seed: int,
                    network: Network) -> EventLog:
    """Renewal-process path-loss events for every link each rule selects.

    Gaps come from ``rule.event_dist`` (Poisson patterns use exponential
    gaps). Magnitudes come from ``rule.pathloss_dist`` or, without one,
    alternate between ``initial + toggle_step`` and ``initial``. Each
    (rule, link) pair draws from its own named substream.
    """
    limit = round(duration * US)
    events: list[LinkEvent] = []
    for rule in rules:
        if rule.event_dist is None:
            continue
        key = _rule_key(rule)
        for link in network.links:
            if not rule.selector.matches(link.src, link.dst):
                continue
            rng = substream(seed, "linkevents", key, link.src, link.dst)
            base = link.params.initial_pathloss
            t = 0.0
            down = False
            while True:
                t += sample_gap(rule.event_dist, rng)
                t_us = round(t * US)
                if t_us > limit:
                    break
                if rule.pathloss_dist is not None:
                    loss = sample(rule.pathloss_dist, rng)
                else:
                    down = not down
                    loss = base + rule.toggle_step if down else base
                events.append(LinkEvent(t_us, link.src, link.dst, float(loss)))
    return EventLog(events)


def format_time(time_us: int) -> str:
    whole, frac = divmod(time_us, US)
    return f"{whole}.{(f'{frac:06d}'.rstrip('0') or '0')}"


def serialize_eel(events: EventLog) -> str:
    return "".join(
        f"{format_time(e.time_us)} nem:{e.src} pathloss nem:{e.dst},{e.pathloss!r}\n"
        for e in events
    )


_LINE = re.compile(r"^(\d+)(?:\.(\d{1,6}))?\s+nem:(\d+)\s+pathloss\s+nem:(\d+),(\S+)$")


def parse_eel(text: str) -> EventLog:
    events = []
    last = -1
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise EelError(f"malformed event {raw.strip()!r}", lineno)
        whole, frac, src, dst, loss = m.groups()
        time_us = int(whole) * US + int((frac or "0").ljust(6, "0"))
        try:
            pathloss = float(loss)
        except ValueError:
            raise EelError(f"bad pathloss {loss!r}", lineno) from None
        if not math.isfinite(pathloss):
            raise EelError("pathloss must be finite", lineno)
        if time_us < last:
            raise EelError("events are not sorted by time", lineno)
        last = time_us
        events.append(LinkEvent(time_us, int(src), int(dst), pathloss))
    return EventLog(events)


def write_eel(events: EventLog, path: str | Path) -> None:
    Path(path).write_text(serialize_eel(events), encoding="ascii", newline="\n")


def import_precomputed(path: str | Path, duration: float | None = None,
                       network: Network | None = None) -> EventLog:
    """Load an EEL file. Events past ``duration`` are dropped with a warning."""
    events = parse_eel(Path(path).read_text(encoding="ascii"))
    if network is not None:
        for e in events:
            if network.link(e.src, e.dst) is None:
                raise EelError(f"event at {format_time(e.time_us)} s targets "
                               f"undeclared link {e.src}->{e.dst}")
    if duration is not None:
        kept = events.truncated(duration)
        if len(kept) < len(events):
            log.warning("%s: dropped %d event(s) beyond %gs", path,
                        len(events) - len(kept), duration)
        events = kept
    return events

"""Stochastic quantities used throughout a scenario.

A ``DistSpec`` is either sampled directly (node counts, pathloss magnitudes)
or used as the gap law of a renewal process (event and packet arrivals).
The two uses differ only for ``poisson``: a direct sample is a Poisson count,
while a Poisson *arrival pattern* has exponential gaps with mean ``1/rate``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

KINDS = ("uniform", "exponential", "normal", "interval", "poisson")
_ARITY = {"uniform": 2, "exponential": 1, "normal": 2, "interval": 1, "poisson": 1}


class DistError(ValueError):
    """Invalid distribution parameters. ``code`` is a stable identifier."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class DistSpec:
    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        check_dist(self)

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "uniform":
            return (p[0] + p[1]) / 2
        if self.kind == "exponential":
            return 1.0 / p[0]
        if self.kind in ("normal", "interval", "poisson"):
            return p[0]
        raise AssertionError(self.kind)

    @property
    def variance(self) -> float:
        p = self.params
        return {
            "uniform": lambda: (p[1] - p[0]) ** 2 / 12,
            "exponential": lambda: 1.0 / p[0] ** 2,
            "normal": lambda: p[1] ** 2,
            "interval": lambda: 0.0,
            "poisson": lambda: p[0],
        }[self.kind]()

    @property
    def mean_gap(self) -> float:
        """Mean inter-arrival time when used as a renewal gap law."""
        if self.kind == "poisson":
            return 1.0 / self.params[0]
        return self.mean

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"


def check_dist(d: DistSpec) -> None:
    if d.kind not in KINDS:
        raise DistError("E_DIST_KIND", f"unknown distribution kind {d.kind!r}")
    if len(d.params) != _ARITY[d.kind]:
        raise DistError(
            "E_DIST_ARITY",
            f"{d.kind} takes {_ARITY[d.kind]} parameter(s), got {len(d.params)}",
        )
    if not all(math.isfinite(p) for p in d.params):
        raise DistError("E_DIST_DOMAIN", f"{d.kind} parameters must be finite")
    p = d.params
    if d.kind == "uniform" and p[0] > p[1]:
        raise DistError("E_DIST_DOMAIN", "uniform requires lo <= hi")
    if d.kind in ("exponential", "poisson") and p[0] <= 0:
        raise DistError("E_DIST_DOMAIN", "rate must be positive")
    if d.kind == "normal" and p[1] < 0:
        raise DistError("E_DIST_DOMAIN", "stddev must be non-negative")
    if d.kind == "interval" and p[0] <= 0:
        raise DistError("E_DIST_DOMAIN", "period must be positive")


def check_gap_dist(d: DistSpec) -> None:
    """Extra constraints for a gap law: it must be able to advance time."""
    if d.kind == "uniform" and (d.params[0] < 0 or d.params[1] <= 0):
        raise DistError("E_DIST_DOMAIN", "uniform gaps need 0 <= lo and hi > 0")
    if d.kind == "normal" and d.params[0] <= 0:
        raise DistError("E_DIST_DOMAIN", "normal gaps need a positive mean")
    if d.mean_gap < 1e-6:
        raise DistError("E_DIST_DOMAIN", "mean gap below the 1 us time resolution")


def parse_dist(value) -> DistSpec:
    """Accept ``{kind:, params:}``, ``"kind(a, b)"`` or a bare number (interval)."""
    if isinstance(value, DistSpec):
        return value
    if isinstance(value, bool):
        raise DistError("E_DIST_KIND", "a distribution cannot be a boolean")
    if isinstance(value, (int, float)):
        return DistSpec("interval", (float(value),))
    if isinstance(value, str):
        text = value.strip()
        if not text.endswith(")") or "(" not in text:
            raise DistError("E_DIST_KIND", f"cannot read distribution {value!r}")
        kind, _, args = text[:-1].partition("(")
        try:
            params = tuple(float(a) for a in args.split(",") if a.strip())
        except ValueError:
            raise DistError("E_DIST_DOMAIN", f"non-numeric parameter in {value!r}") from None
        return DistSpec(kind.strip(), params)
    if isinstance(value, dict):
        extra = set(value) - {"kind", "params"}
        if extra:
            raise DistError("E_DIST_KIND", f"unknown distribution keys {sorted(extra)}")
        if "kind" not in value:
            raise DistError("E_DIST_KIND", "distribution needs a 'kind'")
        params = value.get("params", [])
        if not isinstance(params, (list, tuple)):
            params = [params]
        for p in params:
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise DistError("E_DIST_DOMAIN", f"non-numeric parameter {p!r}")
        return DistSpec(str(value["kind"]), tuple(params))
    raise DistError("E_DIST_KIND", f"cannot read distribution {value!r}")


def sample(dist: DistSpec, rng: np.random.Generator) -> float:
    """Draw one value from ``dist``. ``interval(k)`` always yields ``k``."""
    p = dist.params
    if dist.kind == "interval":
        return p[0]
    if dist.kind == "uniform":
        return float(rng.uniform(p[0], p[1]))
    if dist.kind == "exponential":
        return float(rng.exponential(1.0 / p[0]))
    if dist.kind == "normal":
        return float(rng.normal(p[0], p[1]))
    if dist.kind == "poisson":
        return float(rng.poisson(p[0]))
    raise AssertionError(dist.kind)


def sample_gap(dist: DistSpec, rng: np.random.Generator) -> float:
    """Draw one inter-arrival gap; negative normal draws are truncated at 0."""
    if dist.kind == "poisson":
        return float(rng.exponential(1.0 / dist.params[0]))
    return max(0.0, sample(dist, rng))


def substream(seed: int, *names) -> np.random.Generator:
    """Independent generator keyed by ``seed`` and a path of names.

    Named keys (rather than spawn order) keep one consumer's draws stable
    when other consumers are added or reordered.
    """
    key = tuple(
        int.from_bytes(hashlib.sha256(str(n).encode()).digest()[:4], "little")
        for n in names
    )
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))

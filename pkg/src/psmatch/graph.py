"""Core types shared by every matcher: edges, matchings, run configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

# Relative tolerance used by every approximation / feasibility assertion.
REL_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a run configuration is inconsistent."""


class WeightedEdge(NamedTuple):
    u: int
    v: int
    w: float

    def endpoints(self) -> tuple[int, int]:
        """Endpoints in ascending id order (the lock acquisition order)."""
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


Matching = list  # list[WeightedEdge]; kept as a plain list so worker order is preserved


class Strategy(str, enum.Enum):
    NON_DEFERRABLE = "nd"
    DEFERRABLE = "ds"


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float = 1e-6
    k: int = 1
    r: int = 1
    strategy: Strategy = Strategy.NON_DEFERRABLE
    normalization_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 1 <= self.r <= self.k:
            raise ConfigError(f"r must lie in [1, k], got r={self.r}, k={self.k}")
        if self.k % self.r:
            raise ConfigError(f"k={self.k} is not divisible by r={self.r}")
        # accept plain strings from config files
        object.__setattr__(self, "strategy", Strategy(self.strategy))


@dataclass
class GraphSnapshot:
    """Whole graph held in memory. Only for oracles and tests."""

    n: int
    edges: list[WeightedEdge] = field(default_factory=list)

    def __post_init__(self):
        self.edges = ingest(self.edges)
        for e in self.edges:
            if not (0 <= e.u < self.n and 0 <= e.v < self.n):
                raise ValueError(f"edge {e} has an endpoint outside [0, {self.n})")


def ingest(edges: Iterable) -> list[WeightedEdge]:
    """Coerce raw (u, v, w) triples to edges, dropping self-loops.

    Parallel edges are kept.
    """
    out = []
    for u, v, w in edges:
        if u == v:
            continue
        w = float(w)
        if not w > 0:
            raise ValueError(f"edge weight must be positive, got {w}")
        out.append(WeightedEdge(int(u), int(v), w))
    return out


def validate_matching(edges: Iterable[WeightedEdge], n: int) -> bool:
    seen: set[int] = set()
    for u, v, _ in edges:
        if u == v or u in seen or v in seen:
            return False
        if not (0 <= u < n and 0 <= v < n):
            return False
        seen.add(u)
        seen.add(v)
    return True


def matching_weight(edges: Iterable[WeightedEdge]) -> float:
    return float(sum(e.w for e in edges))


def normalization_threshold(w_max_so_far: float, n: int, epsilon: float) -> float:
    return epsilon * w_max_so_far / (2.0 * (1.0 + epsilon) * n * n)


def normalization_keep(e: WeightedEdge, w_max_so_far: float, n: int, epsilon: float) -> bool:
    """Whether an edge survives the small-weight filter.

    `w_max_so_far` is the running maximum of the caller's own stream,
    including `e` itself.
    """
    return not e.w < normalization_threshold(w_max_so_far, n, epsilon)


class NormalizationFilter:
    """Per-stream running-maximum filter; one instance per worker."""

    __slots__ = ("n", "epsilon", "w_max", "dropped")

    def __init__(self, n: int, epsilon: float):
        self.n = n
        self.epsilon = epsilon
        self.w_max = 0.0
        self.dropped = 0

    def keep(self, e: WeightedEdge) -> bool:
        if e.w > self.w_max:
            self.w_max = e.w
        if normalization_keep(e, self.w_max, self.n, self.epsilon):
            return True
        self.dropped += 1
        return False


def weight_ratio(edges: Sequence[WeightedEdge]) -> float:
    """Max over min edge weight (1.0 for an empty edge list)."""
    if not edges:
        return 1.0
    ws = [e.w for e in edges]
    return max(ws) / min(ws)

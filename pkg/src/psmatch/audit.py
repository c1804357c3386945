"""Single-pass dual update rules giving a-posteriori upper bounds on the optimum.

Every rule starts from y = 0 and, for an edge with w_e > y_u + y_v, raises
the duals by delta_e = w_e - (y_u + y_v) in its own way. Duals never
decrease, so every constraint once satisfied stays satisfied and the final
y is feasible for the matching dual LP: sum(y) >= w(M*).
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import REL_TOL, WeightedEdge


class RuleKind(str, enum.Enum):
    UNI_RELAXED = "unirelaxed"
    UNI_TIGHT = "unitight"
    ARG_MAX = "argmax"
    ARG_MIN = "argmin"
    ARG_RAND = "argrand"


@dataclass(frozen=True)
class DualRule:
    kind: RuleKind
    seed: int = 0

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "DualRule":
        name, _, arg = text.strip().lower().partition(":")
        return cls(RuleKind(name), int(arg) if arg else seed)

    @property
    def label(self) -> str:
        return f"argrand:{self.seed}" if self.kind is RuleKind.ARG_RAND else self.kind.value


def all_rules(seed: int = 0) -> list[DualRule]:
    return [DualRule(kind, seed) for kind in RuleKind]


@dataclass
class DualSolution:
    y: list[float]
    rule: DualRule

    @property
    def objective(self) -> float:
        return float(sum(self.y))


def apply_rule(rule: DualRule, stream: Iterable[WeightedEdge], n: int) -> DualSolution:
    y = [0.0] * n
    kind = rule.kind
    rng = random.Random(rule.seed) if kind is RuleKind.ARG_RAND else None
    for u, v, w in stream:
        if u == v:
            continue
        delta = w - (y[u] + y[v])
        if delta <= 0:
            continue
        if kind is RuleKind.UNI_RELAXED:
            y[u] += delta
            y[v] += delta
        elif kind is RuleKind.UNI_TIGHT:
            y[u] += delta / 2
            y[v] += delta / 2
        else:
            if kind is RuleKind.ARG_RAND:
                x = u if rng.random() < 0.5 else v
            else:
                lo, hi = (u, v) if u < v else (v, u)  # ties go to the smaller id
                if kind is RuleKind.ARG_MAX:
                    x = hi if y[hi] > y[lo] else lo
                else:
                    x = hi if y[hi] < y[lo] else lo
            y[x] += delta
    return DualSolution(y, rule)


def min_bound(solutions: Sequence[DualSolution | float]) -> float:
    if not solutions:
        raise ValueError("min_bound needs at least one solution")
    return min(s.objective if isinstance(s, DualSolution) else float(s) for s in solutions)


def min_opt_percent(w_m: float, y_min: float) -> float:
    """Lower bound on the percentage of the optimum that a matching of weight w_m attains."""
    if y_min == 0:
        return 100.0
    if y_min < 0:
        raise ValueError("a dual bound cannot be negative")
    return 100.0 * w_m / y_min


def check_feasibility(edges: Iterable[WeightedEdge], y: Sequence[float], rel_tol: float = REL_TOL) -> bool:
    for u, v, w in edges:
        if u == v:
            continue
        if y[u] + y[v] < w * (1.0 - rel_tol):
            return False
    return True


def scaled_alpha(alpha: Sequence[float], epsilon: float) -> list[float]:
    """The engine's duals scaled into a feasible dual solution."""
    scale = 1.0 + epsilon
    return [scale * a for a in alpha]

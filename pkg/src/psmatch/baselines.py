"""Reference matchers and the exhaustive oracle for small instances."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Sequence

from .engine import MatchingResult, StackEntry
from .graph import GraphSnapshot, WeightedEdge, ingest
from .metrics import PhaseTimings


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    max_n: int = 12
    max_edges: int = 40


def sequential_local_ratio(stream: Iterable[WeightedEdge], epsilon: float, n: int | None = None) -> MatchingResult:
    """Single-stack local-ratio matcher, no locks, no threads.

    An edge is pushed when w > (1+eps)(alpha_u + alpha_v) and raises both
    duals by its gain; the stack is then popped greedily.
    """
    t0 = time.perf_counter_ns()
    edges = ingest(stream)
    if n is None:
        n = 1 + max((max(e.u, e.v) for e in edges), default=-1)
    alpha = [0.0] * n
    t1 = time.perf_counter_ns()
    stack: list[StackEntry] = []
    scale = 1.0 + epsilon
    for e in edges:
        total = alpha[e.u] + alpha[e.v]
        if e.w <= scale * total:
            continue
        gain = e.w - total
        alpha[e.u] += gain
        alpha[e.v] += gain
        stack.append(StackEntry(e, gain, len(stack)))
    t2 = time.perf_counter_ns()
    final_alpha = list(alpha)
    snapshot = list(stack)
    taken = [False] * n
    matching = []
    while stack:
        e = stack.pop().edge
        if not taken[e.u] and not taken[e.v]:
            taken[e.u] = taken[e.v] = True
            matching.append(e)
    t3 = time.perf_counter_ns()
    return MatchingResult(
        matching=matching, final_alpha=final_alpha, n=n, k=1, epsilon=epsilon, algorithm="seq",
        supersteps=[len(edges)], replay_supersteps=[0], stream_lengths=[len(edges)],
        timings=PhaseTimings.from_ns(t0, t1, t2, t3), stacked_edge_count=len(snapshot),
        stacks=[snapshot],
    )


def feigenbaum_stream(stream: Iterable[WeightedEdge]) -> list[WeightedEdge]:
    """6-approximate one-pass matcher: replace incident edges when w_e is more than twice their weight."""
    mate: dict[int, WeightedEdge] = {}
    for e in ingest(stream):
        incident = {id(m): m for m in (mate.get(e.u), mate.get(e.v)) if m is not None}
        if e.w > 2.0 * sum(m.w for m in incident.values()):
            for m in incident.values():
                del mate[m.u]
                del mate[m.v]
            mate[e.u] = e
            mate[e.v] = e
    seen, out = set(), []
    for m in mate.values():
        if id(m) not in seen:
            seen.add(id(m))
            out.append(m)
    return out


def offline_greedy(snapshot: GraphSnapshot, max_edges: int = 50_000_000) -> list[WeightedEdge]:
    """Heaviest-first greedy; ties broken by ascending endpoint ids."""
    if len(snapshot.edges) > max_edges:
        raise MemoryError(f"{len(snapshot.edges)} edges exceed the greedy limit of {max_edges}")
    order = sorted(snapshot.edges, key=lambda e: (-e.w, *e.endpoints()))
    taken: set[int] = set()
    out = []
    for e in order:
        if e.u not in taken and e.v not in taken:
            taken.add(e.u)
            taken.add(e.v)
            out.append(e)
    return out


def exact_mwm(snapshot: GraphSnapshot, budget: OracleBudget = OracleBudget(),
              order: Sequence[int] | None = None) -> tuple[list[WeightedEdge], float]:
    """Maximum weight matching by exhaustive include/exclude search.

    `order` permutes the branching order of the edges; the optimum value
    must not depend on it.
    """
    if snapshot.n > budget.max_n or len(snapshot.edges) > budget.max_edges:
        raise BudgetExceeded(
            f"instance (n={snapshot.n}, m={len(snapshot.edges)}) exceeds oracle budget {budget}")
    edges = list(snapshot.edges)
    if order is not None:
        edges = [edges[i] for i in order]
    m = len(edges)
    # suffix sums bound what the remaining edges could add
    suffix = [0.0] * (m + 1)
    for i in range(m - 1, -1, -1):
        suffix[i] = suffix[i + 1] + edges[i].w
    best_w = 0.0
    best: list[WeightedEdge] = []
    used = [False] * snapshot.n
    chosen: list[WeightedEdge] = []

    def branch(i: int, acc: float) -> None:
        nonlocal best_w, best
        if acc > best_w:
            best_w, best = acc, list(chosen)
        if i == m or acc + suffix[i] <= best_w:
            return
        e = edges[i]
        if not used[e.u] and not used[e.v]:
            used[e.u] = used[e.v] = True
            chosen.append(e)
            branch(i + 1, acc + e.w)
            chosen.pop()
            used[e.u] = used[e.v] = False
        branch(i + 1, acc)

    branch(0, 0.0)
    return best, best_w

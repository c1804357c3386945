"""Matcher with fully parallel post-processing via repeated augmentation.

Streaming uses the deferrable edge handler; afterwards every worker keeps
its stacked and deferred edges as candidates. Each round, a candidate's
gain is its weight minus the weights of the matched edges it would evict;
positive-gain candidates are fed to `reduce_to_maximal`, which sweeps
geometric weight classes from heavy to light and commits a maximal matching
per class, and the result is applied with `augment_matching`.

The matching is stored as a partner table (mate[u] = v, mate[v] = u).
"""

from __future__ import annotations

import math
import threading
import time
from typing import Sequence

from .engine import (DEFAULT_WATCHDOG, DualTable, MatchingResult, infer_n, process_edge_ds, run_workers)
from .graph import EngineConfig, NormalizationFilter, WeightedEdge
from .metrics import PhaseTimings, WorkerStats

EMPTY = -1


class PartnerTable:
    def __init__(self, n: int):
        self.n = n
        self.mate = [EMPTY] * n
        self.edge: list[WeightedEdge | None] = [None] * n

    def init_range(self, lo: int, hi: int) -> None:
        for x in range(lo, hi):
            self.mate[x] = EMPTY
            self.edge[x] = None

    def matched_weight(self, x: int) -> float:
        e = self.edge[x]
        return 0.0 if e is None or self.mate[x] == EMPTY else e.w

    def is_pair(self, u: int, v: int) -> bool:
        return self.mate[u] == v and self.mate[v] == u

    def is_consistent(self) -> bool:
        return all(v == EMPTY or self.mate[v] == u for u, v in enumerate(self.mate))

    def matching(self) -> list[WeightedEdge]:
        out = []
        for u, v in enumerate(self.mate):
            if v > u and self.mate[v] == u:
                out.append(self.edge[u])
        return out


def class_index(w: float, epsilon: float) -> int:
    """Largest integer c with (1+eps)^c <= w."""
    base = 1.0 + epsilon
    c = math.floor(math.log(w) / math.log1p(epsilon))
    while base ** (c + 1) <= w:
        c += 1
    while base ** c > w:
        c -= 1
    return c


def default_rounds(epsilon: float, rounds_override: int | None = None) -> int:
    rounds = max(1, math.ceil(8 * math.log(2 / epsilon)))
    return rounds if rounds_override is None else min(rounds, rounds_override)


class MaximalReducer:
    """Shared state for k workers running the class sweep together.

    Every worker must call `run` the same number of times; all
    synchronization goes through the shared barrier. With `record=True`
    each worker's share of every class matching is kept in `class_log`.
    """

    def __init__(self, n: int, k: int, epsilon: float, locks: list, barrier: threading.Barrier,
                 record: bool = False):
        self.n = n
        self.k = k
        self.epsilon = epsilon
        self.locks = locks
        self.barrier = barrier
        self.mark = [False] * n
        self.claimed = [False] * n
        self._classes: list[set[int]] = [set() for _ in range(k)]
        self.class_log: list[list[tuple[int, list[WeightedEdge]]]] | None = [[] for _ in range(k)] if record else None

    def run(self, ell: int, items: list[tuple[float, WeightedEdge]]) -> list[WeightedEdge]:
        """items are (class weight, edge); returns this worker's committed edges."""
        n, k, eps = self.n, self.k, self.epsilon
        lo, hi = ell * n // k, (ell + 1) * n // k
        mark, claimed, locks = self.mark, self.claimed, self.locks
        items = sorted(items, key=lambda it: -it[0])
        self._classes[ell] = {class_index(w, eps) for w, _ in items}
        for x in range(lo, hi):
            mark[x] = False
        self.barrier.wait()
        classes = sorted(set().union(*self._classes), reverse=True)
        committed: list[WeightedEdge] = []
        base = 1.0 + eps
        end = 0
        for c in classes:
            threshold = base ** c
            while end < len(items) and items[end][0] >= threshold:
                end += 1
            for x in range(lo, hi):
                claimed[x] = False
            self.barrier.wait()
            mine = []
            for _, e in items[:end]:
                a, b = e.endpoints()
                if claimed[a] or claimed[b]:
                    continue
                with locks[a], locks[b]:
                    if not claimed[a] and not claimed[b]:
                        claimed[a] = claimed[b] = True
                        mine.append(e)
            if self.class_log is not None:
                self.class_log[ell].append((c, list(mine)))
            self.barrier.wait()
            # class matchings are vertex-disjoint: commit without locks
            for e in mine:
                if not mark[e.u] and not mark[e.v]:
                    mark[e.u] = mark[e.v] = True
                    committed.append(e)
            self.barrier.wait()
        return committed


def reduce_to_maximal(edge_sets: Sequence[Sequence[WeightedEdge]], epsilon: float, n: int | None = None,
                      watchdog: float = DEFAULT_WATCHDOG, reducer_out: list | None = None
                      ) -> list[list[WeightedEdge]]:
    """Approximate MWM of the union of the edge sets, one thread per set.

    Returns each worker's share of the matching. If `reducer_out` is a list,
    the recording reducer used for the run is appended to it.
    """
    k = len(edge_sets)
    if k == 0:
        return []
    if n is None:
        n = 1 + max((max(e.u, e.v) for s in edge_sets for e in s), default=-1)
    locks = [threading.Lock() for _ in range(n)]
    barrier = threading.Barrier(k)
    reducer = MaximalReducer(n, k, epsilon, locks, barrier, record=reducer_out is not None)
    if reducer_out is not None:
        reducer_out.append(reducer)
    out: list[list[WeightedEdge]] = [[] for _ in range(k)]

    def worker(ell: int) -> None:
        out[ell] = reducer.run(ell, [(e.w, e) for e in edge_sets[ell] if e.w > 0])

    run_workers(k, worker, threading.Event(), barrier, watchdog)
    return out


def augment_matching(u: int, v: int, partners: PartnerTable, locks: list, edge: WeightedEdge | None = None) -> None:
    """Install (u, v), detaching the old partner of each endpoint."""
    if edge is None:
        edge = WeightedEdge(u, v, 0.0)
    mate, installed = partners.mate, partners.edge
    for x, other in ((u, v), (v, u)):
        y = mate[x]
        if y == EMPTY:
            mate[x] = other
            installed[x] = edge
            continue
        a, b = (x, y) if x < y else (y, x)
        with locks[a], locks[b]:
            if mate[y] == x:
                mate[y] = EMPTY
                installed[y] = None
            mate[x] = other
            installed[x] = edge


def positive_gain_candidates(edges: Sequence[WeightedEdge], partners: PartnerTable) -> list[tuple[float, WeightedEdge]]:
    """Candidates outside the matching whose gain over their incident matched edges is positive."""
    out = []
    for e in edges:
        if partners.is_pair(e.u, e.v):
            continue
        gain = e.w - partners.matched_weight(e.u) - partners.matched_weight(e.v)
        if gain > 0:
            out.append((gain, e))
    return out


def improve_once(edges: Sequence[WeightedEdge], partners: PartnerTable, epsilon: float) -> int:
    """One sequential augmentation round over all candidates; returns augmentations applied."""
    locks = [threading.Lock() for _ in range(partners.n)]
    reducer = MaximalReducer(partners.n, 1, epsilon, locks, threading.Barrier(1))
    chosen = reducer.run(0, positive_gain_candidates(edges, partners))
    for e in chosen:
        augment_matching(e.u, e.v, partners, locks, e)
    return len(chosen)


def run_ps_mwm_pr(streams: Sequence, config: EngineConfig, n: int | None = None,
                  rounds_override: int | None = None, watchdog: float = DEFAULT_WATCHDOG) -> MatchingResult:
    """Deferrable streaming followed by augmentation rounds.

    Stops early once a round applies no augmentation: the state is then a
    fixed point and later rounds could not change it. The reported
    final_alpha is the post-streaming dual vector; deferred edges are not
    replayed, so it certifies only the edges that were not deferred.
    """
    k = config.k
    if len(streams) != k:
        raise ValueError(f"expected {k} streams, got {len(streams)}")
    if n is None:
        n = infer_n(streams)
    eps = config.epsilon
    rounds = default_rounds(eps, rounds_override)
    duals = DualTable(n, initialize=False)
    partners = PartnerTable(n)
    stats = [WorkerStats() for _ in range(k)]
    candidates: list[list[WeightedEdge]] = [[] for _ in range(k)]
    lengths = [0] * k
    stream_end = [0] * k
    state: dict = {"phase": 0, "augmented": [0] * k, "history": [], "done": False}

    def on_barrier() -> None:
        state["phase"] += 1
        if state["phase"] == 1:
            state["pre_end"] = time.perf_counter_ns()
        elif state["phase"] == 2:
            state["alpha"] = list(duals.alpha)

    barrier = threading.Barrier(k, action=on_barrier)
    round_barrier = threading.Barrier(k, action=lambda: _close_round(state))
    reducer = MaximalReducer(n, k, eps, duals.locks, threading.Barrier(k))

    def worker(ell: int) -> None:
        lo, hi = ell * n // k, (ell + 1) * n // k
        duals.init_range(lo, hi)
        partners.init_range(lo, hi)
        st = stats[ell]
        stack: list = []
        deferred: list = []
        flt = NormalizationFilter(n, eps) if config.normalization_enabled else None
        barrier.wait()
        count = 0
        for e in streams[ell]:
            count += 1
            if e.u == e.v:
                continue
            if flt is not None and not flt.keep(e):
                st.dropped += 1
                continue
            process_edge_ds(e, stack, deferred, duals, eps, st)
        lengths[ell] = count
        mine = deferred + [entry.edge for entry in stack]
        candidates[ell] = mine
        stream_end[ell] = time.perf_counter_ns()
        barrier.wait()
        for _ in range(rounds):
            chosen = reducer.run(ell, positive_gain_candidates(mine, partners))
            for e in chosen:
                augment_matching(e.u, e.v, partners, duals.locks, e)
            state["augmented"][ell] = len(chosen)
            round_barrier.wait()
            if state["done"]:
                break

    t_start = time.perf_counter_ns()
    run_workers(k, worker, duals.abort, [barrier, round_barrier, reducer.barrier], watchdog)
    t_end = time.perf_counter_ns()

    return MatchingResult(
        matching=partners.matching(),
        final_alpha=state["alpha"],
        n=n, k=k, r=1, epsilon=eps, algorithm="psmwm-pr",
        supersteps=[s.supersteps for s in stats],
        replay_supersteps=[0] * k,
        stream_lengths=lengths,
        timings=PhaseTimings.from_ns(t_start, state["pre_end"], max(stream_end), t_end),
        global_reads=sum(s.global_reads for s in stats),
        global_writes=sum(s.global_writes for s in stats),
        stacked_edge_count=sum(s.stacked for s in stats),
        deferred_count=sum(s.deferred for s in stats),
        dropped_by_normalization=sum(s.dropped for s in stats),
        alpha_after=list(duals.alpha),
        z_after=list(duals.z),
        extra={
            "rounds_limit": rounds,
            "rounds_executed": len(state["history"]),
            "augmentations_per_round": state["history"],
            "candidates": [list(c) for c in candidates],
            "partners": partners,
        },
    )


def _close_round(state: dict) -> None:
    total = sum(state["augmented"])
    state["history"].append(total)
    state["done"] = total == 0

"""Grouped matcher with group-local dual caches.

Workers are split into r groups of k/r. Each group keeps its own copy of
alpha with its own per-vertex locks. An edge that its group's cache already
proves ineligible is dropped without touching global state; otherwise one
worker of the group becomes the delegate for u and v, takes the group lock,
runs the ordinary edge handler against the global table and copies the
fresh global duals back into the group cache.

Global duals only grow, so a cache entry never exceeds its global value and
a cache-based skip is always a valid global skip.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Sequence

from .engine import (DEFAULT_WATCHDOG, MAX_BACKOFF, MIN_BACKOFF, DualTable, MatchingResult, Outcome,
                     execute, infer_n, process_edge, run_ps_mwm)
from .graph import ConfigError, EngineConfig, Strategy, WeightedEdge
from .metrics import WorkerStats

_SINK = WorkerStats()


class GroupDualTable:
    """r group-local alpha copies, their locks, one group lock per group."""

    def __init__(self, n: int, r: int, initialize: bool = True):
        self.n = n
        self.r = r
        # one contiguous block per group
        self.alpha = [[0.0] * n for _ in range(r)]
        self.locks: list[list] = [[None] * n for _ in range(r)]
        self.glock: list = [None] * r
        self.active_delegates = [0] * r
        self.max_active_delegates = [0] * r
        if initialize:
            for j in range(r):
                self.init_range(j, 0, n)
                self.init_glock(j)

    def init_range(self, j: int, lo: int, hi: int) -> None:
        alpha, locks = self.alpha[j], self.locks[j]
        for x in range(lo, hi):
            alpha[x] = 0.0
            locks[x] = threading.Lock()

    def init_glock(self, j: int) -> None:
        self.glock[j] = threading.Lock()

    def _enter(self, j: int) -> None:
        # called with glock[j] held
        self.active_delegates[j] += 1
        if self.active_delegates[j] > self.max_active_delegates[j]:
            self.max_active_delegates[j] = self.active_delegates[j]

    def _exit(self, j: int) -> None:
        self.active_delegates[j] -= 1


def group_of(worker: int, k: int, r: int) -> int:
    return worker // (k // r)


def _spin_acquire(lock, duals: DualTable, stats: WorkerStats) -> None:
    delay = MIN_BACKOFF
    while not lock.acquire(False):
        stats.supersteps += 1
        stats.contention_rounds += 1
        duals.check_abort()
        time.sleep(delay)
        delay = min(2 * delay, MAX_BACKOFF)


def process_edge_ld(e: WeightedEdge, stack: list, duals: DualTable, groups: GroupDualTable, group: int,
                    epsilon: float, stats: WorkerStats | None = None) -> Outcome:
    """Handle one edge against the group cache, delegating to the global table when needed.

    Global reads and writes are counted only on the delegate path.
    """
    if stats is None:
        stats = _SINK
    u, v, w = e
    local = groups.alpha[group]
    scale = 1.0 + epsilon
    stats.supersteps += 1
    if w <= scale * (local[u] + local[v]):
        return Outcome.SKIPPED
    lo, hi = (u, v) if u < v else (v, u)
    locks = groups.locks[group]
    lock_lo, lock_hi = locks[lo], locks[hi]
    delay = MIN_BACKOFF
    while True:
        if lock_lo.acquire(False):
            if lock_hi.acquire(False):
                break
            lock_lo.release()
        stats.supersteps += 1
        stats.contention_rounds += 1
        duals.check_abort()
        time.sleep(delay)
        delay = min(2 * delay, MAX_BACKOFF)
        if w <= scale * (local[u] + local[v]):
            return Outcome.SKIPPED
    try:
        if w <= scale * (local[u] + local[v]):
            return Outcome.SKIPPED
        glock = groups.glock[group]
        _spin_acquire(glock, duals, stats)
        try:
            groups._enter(group)
            outcome = process_edge(e, stack, duals, epsilon, stats, count_call=False)
            alpha = duals.alpha
            local[u] = alpha[u]
            local[v] = alpha[v]
            stats.global_reads += 1
            groups._exit(group)
        finally:
            glock.release()
        return outcome
    finally:
        lock_hi.release()
        lock_lo.release()


def run_ps_mwm_ld(streams: Sequence, config: EngineConfig, n: int | None = None,
                  watchdog: float = DEFAULT_WATCHDOG,
                  on_streaming_start: Callable[[DualTable, GroupDualTable], None] | None = None,
                  on_streaming_end: Callable[[DualTable, GroupDualTable], None] | None = None,
                  ) -> MatchingResult:
    """Grouped matcher. With r = 1 this is exactly the ungrouped matcher.

    `on_streaming_start` runs once after preprocessing, before any edge is
    read; `on_streaming_end` runs once after the last edge and before post-
    processing. Tests use them to attach and detach samplers.
    """
    if config.strategy is not Strategy.NON_DEFERRABLE:
        raise ConfigError("the grouped matcher supports only the non-deferrable strategy")
    if n is None:
        n = infer_n(streams)
    k, r = config.k, config.r
    if r == 1:
        result = run_ps_mwm(streams, config, n, watchdog)
        result.algorithm = "psmwm-ld"
        return result
    per_group = k // r
    groups = GroupDualTable(n, r, initialize=False)
    eps = config.epsilon

    def preprocess(ell: int) -> None:
        j, i = group_of(ell, k, r), ell % per_group
        groups.init_range(j, i * n // per_group, (i + 1) * n // per_group)
        if i == 0:
            groups.init_glock(j)

    def make_handler(ell, duals, st):
        j = group_of(ell, k, r)
        return lambda e, stack, dfr: process_edge_ld(e, stack, duals, groups, j, eps, st)

    def bind(hook):
        return None if hook is None else (lambda duals: hook(duals, groups))

    result = execute(streams, config, n, make_handler, watchdog, preprocess=preprocess,
                     on_streaming_start=bind(on_streaming_start), algorithm="psmwm-ld", grouped=True,
                     on_streaming_end=bind(on_streaming_end))
    result.extra["max_active_delegates"] = list(groups.max_active_delegates)
    return result

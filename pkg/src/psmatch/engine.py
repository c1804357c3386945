"""Poly-streaming maximum weight matching over k concurrent edge streams.

Each worker owns one stream and one stack. All workers share a global dual
table (alpha, per-vertex locks, marks, z-counters). During streaming an edge
is pushed only if its weight exceeds (1+eps) times the sum of its endpoint
duals; the duals then grow by the edge's gain. After a barrier every worker
unwinds its own stack, matching an edge once it has become tight.

Tightness is tested with integer z-counters: each pushed edge bumps z[u] and
z[v] by one and records their sum; an edge is tight when that sum is
current again, i.e. when every later edge touching u or v has been popped.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from .graph import ConfigError, EngineConfig, NormalizationFilter, Strategy, WeightedEdge
from .metrics import PhaseTimings, WorkerStats

MIN_BACKOFF = 1e-6
MAX_BACKOFF = 256e-6
YIELD_EVERY = 64
DEFAULT_WATCHDOG = 60.0


class Outcome(enum.Enum):
    STACKED = "stacked"
    SKIPPED = "skipped"
    DEFERRED = "deferred"


class StackEntry(NamedTuple):
    edge: WeightedEdge
    gain: float
    z_stamp: int


class WatchdogExpired(RuntimeError):
    """A run did not finish within its wall-clock budget."""


class Aborted(Exception):
    """Raised inside workers once the run has been aborted."""


class DualTable:
    """Shared state: alpha, locks, marks and z-counters for n vertices.

    With initialize=False the arrays are allocated but the locks are left
    unset; workers then fill their own slices with `init_range`.
    """

    def __init__(self, n: int, initialize: bool = True):
        self.n = n
        self.alpha = [0.0] * n
        self.z = [0] * n
        self.mark = [False] * n
        self.locks: list = [None] * n
        self.abort = threading.Event()
        if initialize:
            self.init_range(0, n)

    def init_range(self, lo: int, hi: int) -> None:
        alpha, z, mark, locks = self.alpha, self.z, self.mark, self.locks
        for x in range(lo, hi):
            alpha[x] = 0.0
            z[x] = 0
            mark[x] = False
            locks[x] = threading.Lock()

    def check_abort(self) -> None:
        if self.abort.is_set():
            raise Aborted()


_SINK = WorkerStats()  # counters for callers that do not care


def _push_locked(e: WeightedEdge, stack: list, duals: DualTable, scale: float, stats: WorkerStats) -> Outcome:
    # caller holds lock[u] and lock[v]
    u, v, w = e
    alpha = duals.alpha
    total = alpha[u] + alpha[v]
    stats.global_reads += 1
    if w <= scale * total:
        return Outcome.SKIPPED
    gain = w - total
    alpha[u] += gain
    alpha[v] += gain
    z = duals.z
    z[u] += 1
    z[v] += 1
    stats.global_writes += 1
    stack.append(StackEntry(e, gain, z[u] + z[v]))
    stats.stacked += 1
    return Outcome.STACKED


def process_edge(e: WeightedEdge, stack: list, duals: DualTable, epsilon: float,
                 stats: WorkerStats | None = None, count_call: bool = True) -> Outcome:
    """Non-deferrable edge handling: retry the two locks while the edge stays eligible.

    Ties (w == (1+eps)(alpha_u + alpha_v)) are skipped.
    """
    if stats is None:
        stats = _SINK
    u, v, w = e
    alpha = duals.alpha
    scale = 1.0 + epsilon
    if count_call:
        stats.supersteps += 1
    stats.global_reads += 1
    if w <= scale * (alpha[u] + alpha[v]):
        return Outcome.SKIPPED
    if u == v:
        raise ValueError(f"self-loop {e} reached the engine")
    lo, hi = (u, v) if u < v else (v, u)
    lock_lo = duals.locks[lo]
    lock_hi = duals.locks[hi]
    delay = MIN_BACKOFF
    while True:
        stats.global_writes += 1
        if lock_lo.acquire(False):
            if lock_hi.acquire(False):
                break
            lock_lo.release()
        stats.supersteps += 1
        stats.contention_rounds += 1
        duals.check_abort()
        time.sleep(delay)
        delay = min(2 * delay, MAX_BACKOFF)
        stats.global_reads += 1
        if w <= scale * (alpha[u] + alpha[v]):
            return Outcome.SKIPPED
    try:
        return _push_locked(e, stack, duals, scale, stats)
    finally:
        lock_hi.release()
        lock_lo.release()


def process_edge_ds(e: WeightedEdge, stack: list, deferred: list, duals: DualTable, epsilon: float,
                    stats: WorkerStats | None = None) -> Outcome:
    """Deferrable edge handling: one try-lock round, then defer if still eligible.

    Costs one superstep, plus one more when the lock round fails.
    """
    if stats is None:
        stats = _SINK
    u, v, w = e
    alpha = duals.alpha
    scale = 1.0 + epsilon
    stats.supersteps += 1
    stats.global_reads += 1
    if w <= scale * (alpha[u] + alpha[v]):
        return Outcome.SKIPPED
    if u == v:
        raise ValueError(f"self-loop {e} reached the engine")
    lo, hi = (u, v) if u < v else (v, u)
    lock_lo = duals.locks[lo]
    lock_hi = duals.locks[hi]
    stats.global_writes += 1
    if lock_lo.acquire(False):
        if lock_hi.acquire(False):
            try:
                return _push_locked(e, stack, duals, scale, stats)
            finally:
                lock_hi.release()
                lock_lo.release()
        lock_lo.release()
    stats.supersteps += 1
    stats.contention_rounds += 1
    stats.global_reads += 1
    if w <= scale * (alpha[u] + alpha[v]):
        return Outcome.SKIPPED
    deferred.append(e)
    stats.deferred += 1
    return Outcome.DEFERRED


def process_stack(stack: list, duals: DualTable) -> list[WeightedEdge]:
    """Unwind a worker's stack after the streaming barrier.

    Each popped edge waits until it is tight, is matched if both endpoints
    are still free, and then has its dual and z contributions reversed.
    Tight edges are vertex-disjoint, so marks, alpha and z are written
    without locks; z is decremented last because it is what releases the
    waiters on u and v.
    """
    alpha, z, mark = duals.alpha, duals.z, duals.mark
    matched = []
    while stack:
        e, gain, z_stamp = stack.pop()
        u, v, _ = e
        polls = 0
        while z[u] + z[v] != z_stamp:
            polls += 1
            if polls % YIELD_EVERY == 0:
                duals.check_abort()
                time.sleep(0)
        if not mark[u] and not mark[v]:
            matched.append(e)
            mark[u] = True
            mark[v] = True
        alpha[u] -= gain
        alpha[v] -= gain
        z[u] -= 1
        z[v] -= 1
    return matched


@dataclass
class MatchingResult:
    matching: list[WeightedEdge]
    final_alpha: list[float]
    n: int
    k: int
    r: int = 1
    epsilon: float = 0.0
    algorithm: str = "psmwm"
    grouped: bool = False
    supersteps: list[int] = field(default_factory=list)
    replay_supersteps: list[int] = field(default_factory=list)
    stream_lengths: list[int] = field(default_factory=list)
    timings: PhaseTimings = field(default_factory=PhaseTimings)
    global_reads: int = 0
    global_writes: int = 0
    stacked_edge_count: int = 0
    deferred_count: int = 0
    dropped_by_normalization: int = 0
    stacks: list[list[StackEntry]] = field(default_factory=list)
    alpha_after: list[float] | None = None
    z_after: list[int] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def weight(self) -> float:
        return float(sum(e.w for e in self.matching))

    @property
    def alpha_sum(self) -> float:
        return float(sum(self.final_alpha))

    @property
    def global_access_count(self) -> int:
        return self.global_reads + self.global_writes

    @property
    def effective_iterations(self) -> int:
        return max(self.supersteps, default=0)

    def stacked_per_vertex(self) -> list[int]:
        counts = [0] * self.n
        for stack in self.stacks:
            for entry in stack:
                counts[entry.edge.u] += 1
                counts[entry.edge.v] += 1
        return counts


# --------------------------------------------------------------------------
# worker orchestration


def run_workers(k: int, target: Callable[[int], None], abort: threading.Event,
                barriers: threading.Barrier | Sequence[threading.Barrier], watchdog: float) -> None:
    """Run target(0..k-1) on k threads; raise WatchdogExpired past the deadline.

    A failing worker aborts the run: the event is set and every barrier is
    broken so the other workers unblock.
    """
    if isinstance(barriers, threading.Barrier):
        barriers = [barriers]

    def abort_all() -> None:
        abort.set()
        for b in barriers:
            b.abort()

    errors: list[BaseException | None] = [None] * k

    def wrapped(ell: int) -> None:
        try:
            target(ell)
        except BaseException as exc:  # surfaced in the calling thread
            errors[ell] = exc
            abort_all()

    threads = [threading.Thread(target=wrapped, args=(ell,), name=f"psmwm-{ell}", daemon=True)
               for ell in range(k)]
    deadline = time.monotonic() + watchdog
    for t in threads:
        t.start()
    for t in threads:
        t.join(max(0.0, deadline - time.monotonic()))
    if any(t.is_alive() for t in threads):
        abort_all()
        for t in threads:
            t.join(1.0)
        raise WatchdogExpired(f"run exceeded the {watchdog:g} s watchdog")
    real = [e for e in errors if e is not None and not isinstance(e, (Aborted, threading.BrokenBarrierError))]
    if real:
        raise real[0]
    if any(errors):
        raise next(e for e in errors if e is not None)


def infer_n(streams: Sequence) -> int:
    return max((getattr(s, "n", 0) for s in streams), default=0)


EdgeHandler = Callable[[WeightedEdge, list, list], Outcome]


def execute(streams: Sequence, config: EngineConfig, n: int,
            make_handler: Callable[[int, DualTable, WorkerStats], EdgeHandler],
            watchdog: float = DEFAULT_WATCHDOG,
            preprocess: Callable[[int], None] | None = None,
            on_streaming_start: Callable[[DualTable], None] | None = None,
            algorithm: str = "psmwm", grouped: bool = False,
            on_streaming_end: Callable[[DualTable], None] | None = None) -> MatchingResult:
    """Shared three-phase driver: init, stream, barrier, unwind stacks.

    The two hooks run inside the barrier actions, so no worker is active
    while they execute.
    """
    k = config.k
    if len(streams) != k:
        raise ConfigError(f"expected {k} streams, got {len(streams)}")
    eps = config.epsilon
    duals = DualTable(n, initialize=False)
    stacks: list[list] = [[] for _ in range(k)]
    deferred: list[list] = [[] for _ in range(k)]
    stats = [WorkerStats() for _ in range(k)]
    replay = [WorkerStats() for _ in range(k)]
    matchings: list[list] = [[] for _ in range(k)]
    lengths = [0] * k
    stream_end = [0] * k
    state: dict = {"phase": 0}

    def on_barrier() -> None:
        state["phase"] += 1
        now = time.perf_counter_ns()
        if state["phase"] == 1:
            state["pre_end"] = now
            if on_streaming_start is not None:
                on_streaming_start(duals)
        elif state["phase"] == 2:
            state["alpha"] = list(duals.alpha)
            state["stacks"] = [list(s) for s in stacks]
            if on_streaming_end is not None:
                on_streaming_end(duals)

    barrier = threading.Barrier(k, action=on_barrier)

    def worker(ell: int) -> None:
        duals.init_range(ell * n // k, (ell + 1) * n // k)
        if preprocess is not None:
            preprocess(ell)
        st = stats[ell]
        stack = stacks[ell]
        dfr = deferred[ell]
        handle = make_handler(ell, duals, st)
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
            handle(e, stack, dfr)
        lengths[ell] = count
        if dfr:
            rs = replay[ell]
            for e in dfr:
                process_edge(e, stack, duals, eps, rs)
        stream_end[ell] = time.perf_counter_ns()
        barrier.wait()
        matchings[ell] = process_stack(stack, duals)

    t_start = time.perf_counter_ns()
    run_workers(k, worker, duals.abort, barrier, watchdog)
    t_end = time.perf_counter_ns()

    matching = [e for m in matchings for e in m]
    return MatchingResult(
        matching=matching,
        final_alpha=state["alpha"],
        n=n, k=k, r=config.r, epsilon=eps, algorithm=algorithm, grouped=grouped,
        supersteps=[s.supersteps for s in stats],
        replay_supersteps=[s.supersteps for s in replay],
        stream_lengths=lengths,
        timings=PhaseTimings.from_ns(t_start, state["pre_end"], max(stream_end), t_end),
        global_reads=sum(s.global_reads for s in stats) + sum(s.global_reads for s in replay),
        global_writes=sum(s.global_writes for s in stats) + sum(s.global_writes for s in replay),
        stacked_edge_count=sum(s.stacked for s in stats) + sum(s.stacked for s in replay),
        deferred_count=sum(s.deferred for s in stats),
        dropped_by_normalization=sum(s.dropped for s in stats),
        stacks=state["stacks"],
        alpha_after=list(duals.alpha),
        z_after=list(duals.z),
    )


def run_ps_mwm(streams: Sequence, config: EngineConfig, n: int | None = None,
               watchdog: float = DEFAULT_WATCHDOG) -> MatchingResult:
    """Run the ungrouped matcher (r = 1) with the configured strategy."""
    if config.r != 1:
        raise ConfigError("run_ps_mwm is the ungrouped matcher; use run_ps_mwm_ld for r > 1")
    if n is None:
        n = infer_n(streams)
    eps = config.epsilon

    if config.strategy is Strategy.DEFERRABLE:
        def make_handler(ell, duals, st):
            return lambda e, stack, dfr: process_edge_ds(e, stack, dfr, duals, eps, st)
        algorithm = "psmwm-ds"
    else:
        def make_handler(ell, duals, st):
            return lambda e, stack, dfr: process_edge(e, stack, duals, eps, st)
        algorithm = "psmwm"
    return execute(streams, config, n, make_handler, watchdog, algorithm=algorithm)

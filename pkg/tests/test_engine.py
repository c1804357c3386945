import threading

import pytest

from oracles import brute_force_mwm, random_instance
from psmatch.baselines import sequential_local_ratio
from psmatch.engine import (DualTable, Outcome, StackEntry, WatchdogExpired, process_edge, process_edge_ds,
                            process_stack, run_ps_mwm, run_workers)
from psmatch.graph import ConfigError, EngineConfig, WeightedEdge, validate_matching
from psmatch.metrics import WorkerStats
from psmatch.streams import EdgeStream, partition

E = WeightedEdge
A, B, C, D = 0, 1, 2, 3
TRIANGLE = [E(A, B, 10.0), E(B, C, 12.0), E(A, C, 8.0)]


def test_first_edge_is_stacked():
    duals, stack = DualTable(3), []
    assert process_edge(E(A, B, 10.0), stack, duals, 0.5) is Outcome.STACKED
    assert stack == [StackEntry(E(A, B, 10.0), 10.0, 2)]
    assert duals.alpha[A] == duals.alpha[B] == 10.0
    assert duals.z[A] == duals.z[B] == 1


def test_second_edge_skipped_by_scaled_duals():
    duals, stack = DualTable(3), []
    process_edge(E(A, B, 10.0), stack, duals, 0.5)
    assert process_edge(E(B, C, 5.0), stack, duals, 0.5) is Outcome.SKIPPED
    assert len(stack) == 1 and duals.alpha == [10.0, 10.0, 0.0] and duals.z == [1, 1, 0]


def test_tie_is_skipped():
    duals, stack = DualTable(3), []
    process_edge(E(A, B, 10.0), stack, duals, 0.5)
    assert process_edge(E(B, C, 15.0), stack, duals, 0.5) is Outcome.SKIPPED


def test_triangle_trace():
    duals, stack = DualTable(3), []
    outcomes = [process_edge(e, stack, duals, 1e-6) for e in TRIANGLE]
    assert outcomes == [Outcome.STACKED, Outcome.STACKED, Outcome.SKIPPED]
    assert [(s.edge, s.gain, s.z_stamp) for s in stack] == [(TRIANGLE[0], 10.0, 2), (TRIANGLE[1], 2.0, 3)]
    assert duals.alpha == [10.0, 12.0, 2.0]
    matched = process_stack(stack, duals)
    assert matched == [TRIANGLE[1]]
    assert duals.z == [0, 0, 0]
    assert duals.alpha == [0.0, 0.0, 0.0]
    assert duals.mark == [False, True, True]


def test_single_stacked_edge_always_matched():
    duals, stack = DualTable(2), []
    process_edge(E(0, 1, 3.0), stack, duals, 0.1)
    assert process_stack(stack, duals) == [E(0, 1, 3.0)]


def test_two_workers_disjoint_stacks_both_matched():
    duals = DualTable(4)
    s1, s2 = [], []
    process_edge(E(A, B, 5.0), s1, duals, 0.1)
    process_edge(E(C, D, 7.0), s2, duals, 0.1)
    out = [None, None]

    def work(i):
        out[i] = process_stack((s1, s2)[i], duals)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(5)
    assert out == [[E(A, B, 5.0)], [E(C, D, 7.0)]]


def test_ds_uncontended_matches_nd():
    edges = random_instance(3)[1]
    d1, d2 = DualTable(10), DualTable(10)
    s1, s2, deferred = [], [], []
    for e in edges:
        assert process_edge(e, s1, d1, 0.1) is process_edge_ds(e, s2, deferred, d2, 0.1)
    assert s1 == s2 and d1.alpha == d2.alpha and deferred == []


def test_ds_contended_eligible_edge_is_deferred():
    duals, stack, deferred = DualTable(3), [], []
    duals.locks[B].acquire()
    try:
        st = WorkerStats()
        assert process_edge_ds(E(A, B, 4.0), stack, deferred, duals, 0.5, st) is Outcome.DEFERRED
    finally:
        duals.locks[B].release()
    assert deferred == [E(A, B, 4.0)] and stack == []
    assert duals.alpha == [0.0, 0.0, 0.0] and duals.z == [0, 0, 0]
    assert st.supersteps == 2 and st.deferred == 1
    # the lower lock was released again
    assert duals.locks[A].acquire(False)


def test_ds_contended_ineligible_edge_is_skipped():
    duals, stack, deferred = DualTable(3), [], []

    class FlipLock:
        """A lock whose failed acquire raises alpha before the re-read."""

        def acquire(self, blocking=True):
            duals.alpha[A] = 100.0
            return False

        def release(self):
            raise AssertionError("never held")

    duals.locks[A] = FlipLock()
    assert process_edge_ds(E(A, B, 4.0), stack, deferred, duals, 0.5) is Outcome.SKIPPED
    assert deferred == [] and stack == []


def test_nd_waits_for_lock_then_stacks():
    duals, stack = DualTable(2), []
    duals.locks[1].acquire()
    st = WorkerStats()
    timer = threading.Timer(0.01, duals.locks[1].release)
    timer.start()
    assert process_edge(E(0, 1, 3.0), stack, duals, 0.1, st) is Outcome.STACKED
    timer.join()
    assert st.supersteps >= 2 and st.contention_rounds == st.supersteps - 1


def test_nd_retry_gives_up_when_edge_becomes_ineligible():
    duals, stack = DualTable(2), []
    duals.locks[1].acquire()
    timer = threading.Timer(0.01, lambda: duals.alpha.__setitem__(0, 50.0))
    timer.start()
    assert process_edge(E(0, 1, 3.0), stack, duals, 0.1) is Outcome.SKIPPED
    timer.join()
    duals.locks[1].release()


def _streams(edges, k, n):
    return partition(edges, k, n=n)


def test_run_k1_equals_sequential_reference():
    n, edges = random_instance(17)
    ref = sequential_local_ratio(edges, 1e-6, n)
    res = run_ps_mwm(_streams(edges, 1, n), EngineConfig(k=1), n)
    assert res.matching == ref.matching
    assert res.final_alpha == ref.final_alpha
    assert res.effective_iterations == len(edges)


def test_run_empty_streams():
    res = run_ps_mwm([EdgeStream([], 5) for _ in range(3)], EngineConfig(k=3), 5)
    assert res.matching == [] and res.final_alpha == [0.0] * 5 and res.effective_iterations == 0


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("strategy", ["nd", "ds"])
def test_run_k4_approximation(seed, strategy):
    n, edges = random_instance(seed, max_n=10)
    eps = 1e-6
    res = run_ps_mwm(_streams(edges, 4, n), EngineConfig(epsilon=eps, k=4, strategy=strategy), n)
    assert validate_matching(res.matching, n)
    assert res.weight >= brute_force_mwm(n, edges) / (2 * (1 + eps)) * (1 - 1e-9)
    assert res.algorithm == ("psmwm" if strategy == "nd" else "psmwm-ds")


def test_run_rejects_grouped_config_and_stream_mismatch():
    with pytest.raises(ConfigError):
        run_ps_mwm([EdgeStream([], 2)] * 2, EngineConfig(k=2, r=2), 2)
    with pytest.raises(ConfigError):
        run_ps_mwm([EdgeStream([], 2)], EngineConfig(k=2), 2)


def test_self_loops_in_streams_are_dropped():
    assert EdgeStream([E(1, 1, 5.0)], 2).edges == []
    streams = [[E(1, 1, 5.0), E(0, 1, 2.0)]]  # raw iterable, not pre-ingested
    res = run_ps_mwm(streams, EngineConfig(k=1), 2)
    assert res.matching == [E(0, 1, 2.0)]
    assert res.stream_lengths == [2]


def test_normalization_drops_tiny_edges():
    streams = [EdgeStream([E(0, 1, 1.0), E(2, 3, 1e-12)], 4)]
    res = run_ps_mwm(streams, EngineConfig(k=1, epsilon=0.5, normalization_enabled=True), 4)
    assert res.dropped_by_normalization == 1
    assert res.matching == [E(0, 1, 1.0)]


def test_run_workers_reports_watchdog():
    stop = threading.Event()
    with pytest.raises(WatchdogExpired):
        run_workers(2, lambda ell: stop.wait(2), threading.Event(), threading.Barrier(2), 0.05)
    stop.set()


def test_run_workers_propagates_first_real_error():
    barrier = threading.Barrier(2)

    def target(ell):
        if ell == 0:
            raise KeyError("boom")
        barrier.wait()  # broken by the failing worker

    with pytest.raises(KeyError):
        run_workers(2, target, threading.Event(), barrier, 5.0)


def test_stacked_per_vertex_counts():
    n, edges = random_instance(5)
    res = run_ps_mwm(_streams(edges, 2, n), EngineConfig(k=2), n)
    counts = res.stacked_per_vertex()
    assert sum(counts) == 2 * res.stacked_edge_count

"""Measurement layer: supersteps, phase timings, memory accounting, run records."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Sequence

SCHEMA_VERSION = 1


class WorkerStats:
    """Per-worker counters. Owned by one worker, summed after the final barrier.

    supersteps counts one per edge handled in the streaming loop plus one per
    extra lock-acquisition round caused by contention. Global reads/writes
    count steps that touch the global dual table, not individual scalars:
    one read per eligibility test or cache refresh against global alpha
    (both endpoints at once), one write per attempt to take the endpoint
    lock pair, one write per dual update of an edge (alpha and z of both
    endpoints).
    """

    __slots__ = ("supersteps", "replay_supersteps", "global_reads", "global_writes",
                 "stacked", "deferred", "contention_rounds", "dropped")

    def __init__(self):
        self.supersteps = 0
        self.replay_supersteps = 0
        self.global_reads = 0
        self.global_writes = 0
        self.stacked = 0
        self.deferred = 0
        self.contention_rounds = 0
        self.dropped = 0


@dataclass
class PhaseTimings:
    preprocessing: float = 0.0
    streaming: float = 0.0
    postprocessing: float = 0.0

    @property
    def total(self) -> float:
        return self.preprocessing + self.streaming + self.postprocessing

    @classmethod
    def from_ns(cls, t_start: int, t_pre_end: int, t_stream_end: int, t_end: int) -> "PhaseTimings":
        return cls((t_pre_end - t_start) / 1e9, (t_stream_end - t_pre_end) / 1e9, (t_end - t_stream_end) / 1e9)


def effective_iterations(supersteps: Sequence[int]) -> int:
    """Maximum superstep count over workers (0 for no workers)."""
    return max(supersteps, default=0)


def speedup_by_effective_iterations(base_k1: Sequence[int] | int, run_k: Sequence[int] | int) -> float:
    base = base_k1 if isinstance(base_k1, int) else effective_iterations(base_k1)
    new = run_k if isinstance(run_k, int) else effective_iterations(run_k)
    if new == 0:
        raise ValueError("speedup undefined for a run with zero supersteps")
    return base / new


def amortized_per_edge(supersteps: Sequence[int], stream_lengths: Sequence[int]) -> dict[str, float | None]:
    """Supersteps per edge, amortized per stream (worst stream) and globally."""
    per_stream = [s / l for s, l in zip(supersteps, stream_lengths) if l]
    total = sum(stream_lengths)
    return {
        "per_stream_max": max(per_stream) if per_stream else None,
        "global": sum(supersteps) / total if total else None,
    }


# Declared field widths (bytes) used by memory_estimate.
HEADER_BYTES = 64
ALPHA_BYTES = 8
LOCK_BYTES = 8
MARK_BYTES = 1
Z_BYTES = 8
STACK_ENTRY_BYTES = 40  # u, v, w, gain, z-stamp: five 8-byte words
DEFERRED_ENTRY_BYTES = 24  # u, v, w
MATCH_EDGE_BYTES = 24


def dual_copies(r: int, grouped: bool) -> int:
    return r + 1 if grouped else 1


def memory_estimate(result) -> int:
    """Peak auxiliary memory by accounting over declared field widths.

    Every dual copy carries an alpha entry and a lock per vertex; marks and
    z-counters exist once.
    """
    n = result.n
    copies = dual_copies(result.r, getattr(result, "grouped", False))
    return (HEADER_BYTES
            + copies * n * (ALPHA_BYTES + LOCK_BYTES)
            + n * (MARK_BYTES + Z_BYTES)
            + result.stacked_edge_count * STACK_ENTRY_BYTES
            + result.deferred_count * DEFERRED_ENTRY_BYTES
            + len(result.matching) * MATCH_EDGE_BYTES)


# --------------------------------------------------------------------------
# run records

TIMING_FIELDS = ("time_preprocessing", "time_streaming", "time_postprocessing", "time_total")


@dataclass
class RunRecord:
    config: dict[str, Any]
    algorithm: str
    seed: int
    repeat: int
    n: int
    m: int
    k: int
    r: int
    epsilon: float
    matching_size: int
    matching_weight: float
    alpha_sum: float | None
    dual_bounds: dict[str, float] = field(default_factory=dict)
    y_min: float | None = None
    min_opt_percent: float | None = None
    w_star: float | None = None
    effective_iterations: int | None = None
    stream_lengths: list[int] = field(default_factory=list)
    l_max: int | None = None
    l_min: int | None = None
    amortized_per_stream: float | None = None
    amortized_global: float | None = None
    global_reads: int | None = None
    global_writes: int | None = None
    stacked_edges: int | None = None
    deferred_edges: int | None = None
    memory_bytes: int | None = None
    time_preprocessing: float | None = None
    time_streaming: float | None = None
    time_postprocessing: float | None = None
    time_total: float | None = None
    status: str = "ok"
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown RunRecord fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls.from_dict(json.loads(line))

    def without_timing(self) -> dict[str, Any]:
        d = self.to_dict()
        for name in TIMING_FIELDS:
            d.pop(name)
        return d


CSV_COLUMNS = [f.name for f in fields(RunRecord)]


def records_to_jsonl(records: Iterable[RunRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def records_from_jsonl(text: str) -> list[RunRecord]:
    return [RunRecord.from_json(line) for line in text.splitlines() if line.strip()]


def records_to_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = rec.to_dict()
        for key in ("config", "dual_bounds", "stream_lengths"):
            row[key] = json.dumps(row[key], sort_keys=True, separators=(",", ":"))
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()

"""Batch experiment runner.

A run is described by an `ExperimentConfig`, read from a key=value text file
(``#`` starts a comment) and overridden by command-line flags. Every repeat
produces one `RunRecord` carrying the resolved config, so the output is
self-describing.

Exit codes: 0 success, 2 invalid configuration, 3 watchdog expiry, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from .amplify import run_ps_mwm_pr
from .audit import DualRule, RuleKind, apply_rule, min_opt_percent, scaled_alpha
from .baselines import BudgetExceeded, OracleBudget, exact_mwm, feigenbaum_stream, offline_greedy, sequential_local_ratio
from .engine import DEFAULT_WATCHDOG, MatchingResult, WatchdogExpired, run_ps_mwm
from .graph import ConfigError, EngineConfig, GraphSnapshot, Strategy, WeightedEdge, matching_weight
from .metrics import RunRecord, amortized_per_edge, memory_estimate, records_to_csv, records_to_jsonl
from .numa import run_ps_mwm_ld
from .streams import PartitionMode, SeedGraphSpec, StreamFormatError, StreamSetSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_WATCHDOG = 3
EXIT_IO = 4

ENGINE_ALGORITHMS = ("psmwm", "psmwm-ds", "psmwm-ld", "psmwm-pr")
BASELINE_ALGORITHMS = ("seq", "feigenbaum", "greedy", "exact")
ALGORITHMS = ENGINE_ALGORITHMS + BASELINE_ALGORITHMS
FORMATS = ("jsonl", "csv")


@dataclass
class ExperimentConfig:
    # instance
    generator: str = "er"
    n: int = 100
    p: float = 0.1
    x: int = 4
    seed_graph_n: int = 256
    seed_graph_p: float = 0.05
    paths: tuple[str, ...] = ()
    weight_lo: float | None = None
    weight_hi: float | None = None
    partition_mode: str = PartitionMode.ROUND_ROBIN.value
    # algorithm
    algorithm: str = "psmwm"
    k: int = 1
    r: int = 1
    epsilon: float = 1e-6
    strategy: str | None = None
    normalization: bool = False
    pr_rounds: int | None = None
    seed: int = 0
    # reporting
    audits: tuple[str, ...] = ()
    exact_max_n: int = OracleBudget().max_n
    exact_max_edges: int = OracleBudget().max_edges
    repeats: int = 1
    watchdog: float = DEFAULT_WATCHDOG
    out: str | None = None
    format: str = "jsonl"

    def __post_init__(self):
        self.paths = tuple(self.paths)
        self.audits = tuple(self.audits)
        if any(a.lower() == "all" for a in self.audits):
            self.audits = tuple(kind.value for kind in RuleKind)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        if self.generator not in ("er", "ba", "ua", "file"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.generator != "file" and self.n < 2:
            raise ConfigError("generated instances need n >= 2")
        if self.generator == "file" and not self.paths:
            raise ConfigError("generator=file needs at least one path")
        if (self.weight_lo is None) != (self.weight_hi is None):
            raise ConfigError("weight_lo and weight_hi must be given together")
        if self.weight_lo is not None and not 0 < self.weight_lo <= self.weight_hi:
            raise ConfigError("weights must satisfy 0 < weight_lo <= weight_hi")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.watchdog <= 0:
            raise ConfigError("watchdog must be positive")
        if self.r > 1 and self.algorithm != "psmwm-ld":
            raise ConfigError("r > 1 is only meaningful for psmwm-ld")
        try:
            PartitionMode(self.partition_mode)
        except ValueError:
            raise ConfigError(f"unknown partition mode {self.partition_mode!r}") from None
        for rule in self.audits:
            try:
                DualRule.parse(rule)
            except ValueError:
                raise ConfigError(f"unknown dual rule {rule!r}") from None
        strategy = self.resolved_strategy()
        if self.algorithm == "psmwm-ld" and strategy is Strategy.DEFERRABLE:
            raise ConfigError("psmwm-ld supports only the non-deferrable strategy")
        self.engine_config()  # checks epsilon, k, r

    def resolved_strategy(self) -> Strategy:
        implied = {"psmwm-ds": Strategy.DEFERRABLE, "psmwm-pr": Strategy.DEFERRABLE}.get(self.algorithm)
        if self.strategy is None:
            return implied or Strategy.NON_DEFERRABLE
        try:
            chosen = Strategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r}") from None
        if implied is not None and chosen is not implied:
            raise ConfigError(f"{self.algorithm} always uses strategy {implied.value}")
        return chosen

    def engine_config(self) -> EngineConfig:
        return EngineConfig(epsilon=self.epsilon, k=self.k, r=self.r, strategy=self.resolved_strategy(),
                            normalization_enabled=self.normalization, seed=self.seed)

    def stream_spec(self) -> StreamSetSpec:
        weights = None if self.weight_lo is None else (self.weight_lo, self.weight_hi)
        return StreamSetSpec(generator=self.generator, n=self.n, p=self.p, x=self.x,
                             seed_graph=SeedGraphSpec(self.seed_graph_n, self.seed_graph_p),
                             paths=self.paths, weight_range=weights, k=self.k,
                             partition_mode=PartitionMode(self.partition_mode), seed=self.seed)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["paths"] = list(self.paths)
        d["audits"] = list(self.audits)
        d["strategy"] = self.resolved_strategy().value
        return d


# --------------------------------------------------------------------------
# config parsing

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _optional(conv):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "null") else conv(text)
    return parse


_CONVERTERS = {
    "generator": str, "n": int, "p": float, "x": int, "seed_graph_n": int, "seed_graph_p": float,
    "paths": _list, "weight_lo": _optional(float), "weight_hi": _optional(float),
    "partition_mode": str, "algorithm": str, "k": int, "r": int, "epsilon": float,
    "strategy": _optional(str), "normalization": _parse_bool, "pr_rounds": _optional(int), "seed": int,
    "audits": _list, "exact_max_n": int, "exact_max_edges": int, "repeats": int, "watchdog": float,
    "out": _optional(str), "format": str,
}
assert set(_CONVERTERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config_text(text: str) -> dict:
    """key=value lines into typed field values; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path is not None else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# running

def _engine_run(cfg: ExperimentConfig, streams, n: int) -> MatchingResult:
    ec = cfg.engine_config()
    if cfg.algorithm == "psmwm-ld":
        return run_ps_mwm_ld(streams, ec, n, cfg.watchdog)
    if cfg.algorithm == "psmwm-pr":
        return run_ps_mwm_pr(streams, ec, n, cfg.pr_rounds, cfg.watchdog)
    return run_ps_mwm(streams, ec, n, cfg.watchdog)


def _base_record(cfg: ExperimentConfig, repeat: int, n: int, m: int, matching: list[WeightedEdge]) -> RunRecord:
    return RunRecord(config=cfg.echo(), algorithm=cfg.algorithm, seed=cfg.seed, repeat=repeat, n=n, m=m,
                     k=cfg.k, r=cfg.r, epsilon=cfg.epsilon, matching_size=len(matching),
                     matching_weight=matching_weight(matching), alpha_sum=None)


def _fill_from_result(rec: RunRecord, res: MatchingResult) -> None:
    rec.alpha_sum = res.alpha_sum
    rec.effective_iterations = res.effective_iterations
    rec.stream_lengths = list(res.stream_lengths)
    rec.l_max = max(res.stream_lengths, default=0)
    rec.l_min = min(res.stream_lengths, default=0)
    amortized = amortized_per_edge(res.supersteps, res.stream_lengths)
    rec.amortized_per_stream = amortized["per_stream_max"]
    rec.amortized_global = amortized["global"]
    rec.global_reads = res.global_reads
    rec.global_writes = res.global_writes
    rec.stacked_edges = res.stacked_edge_count
    rec.deferred_edges = res.deferred_count
    rec.memory_bytes = memory_estimate(res)
    t = res.timings
    rec.time_preprocessing = t.preprocessing
    rec.time_streaming = t.streaming
    rec.time_postprocessing = t.postprocessing
    rec.time_total = t.total


def run_once(cfg: ExperimentConfig, repeat: int = 0) -> RunRecord:
    n, streams = cfg.stream_spec().build()
    edges = [e for s in streams for e in s.edges]  # worker order, used by baselines and audits
    m = len(edges)
    res: MatchingResult | None = None
    t0 = time.perf_counter()
    if cfg.algorithm in ENGINE_ALGORITHMS:
        res = _engine_run(cfg, streams, n)
        matching = res.matching
    elif cfg.algorithm == "seq":
        res = sequential_local_ratio(edges, cfg.epsilon, n)
        matching = res.matching
    elif cfg.algorithm == "feigenbaum":
        matching = feigenbaum_stream(edges)
    elif cfg.algorithm == "greedy":
        matching = offline_greedy(GraphSnapshot(n, edges))
    else:
        try:
            matching, _ = exact_mwm(GraphSnapshot(n, edges), OracleBudget(cfg.exact_max_n, cfg.exact_max_edges))
        except BudgetExceeded as exc:
            raise ConfigError(f"instance too large for the exact oracle: {exc}") from None

    elapsed = time.perf_counter() - t0
    rec = _base_record(cfg, repeat, n, m, matching)
    if res is not None:
        _fill_from_result(rec, res)
    else:
        rec.time_total = elapsed

    bounds: dict[str, float] = {}
    for text in cfg.audits:
        rule = DualRule.parse(text, cfg.seed)
        bounds[rule.label] = apply_rule(rule, edges, n).objective
    # post-streaming alpha certifies every edge except ones deferred and never replayed
    if res is not None and cfg.algorithm != "psmwm-pr":
        bounds["alpha"] = float(sum(scaled_alpha(res.final_alpha, cfg.epsilon)))
    rec.dual_bounds = bounds
    if bounds:
        rec.y_min = min(bounds.values())
        rec.min_opt_percent = min_opt_percent(rec.matching_weight, rec.y_min)
    if n <= cfg.exact_max_n and m <= cfg.exact_max_edges:
        _, rec.w_star = exact_mwm(GraphSnapshot(n, edges), OracleBudget(cfg.exact_max_n, cfg.exact_max_edges))
    return rec


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Run `cfg.repeats` sequential repeats on the same instance.

    A repeat that exceeds the watchdog yields a record with status
    "watchdog" and stops the experiment.
    """
    cfg.validate()
    records = []
    for repeat in range(cfg.repeats):
        try:
            records.append(run_once(cfg, repeat))
        except WatchdogExpired:
            rec = RunRecord(config=cfg.echo(), algorithm=cfg.algorithm, seed=cfg.seed, repeat=repeat,
                            n=cfg.n, m=0, k=cfg.k, r=cfg.r, epsilon=cfg.epsilon, matching_size=0,
                            matching_weight=0.0, alpha_sum=None, status="watchdog")
            records.append(rec)
            break
    return records


def format_report(records: Sequence[RunRecord], fmt: str = "jsonl") -> str:
    if not records:
        raise ValueError("no records to report")
    if fmt == "jsonl":
        return records_to_jsonl(records)
    if fmt == "csv":
        return records_to_csv(records)
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(records: Sequence[RunRecord], fmt: str = "jsonl", out: str | Path | None = None) -> str:
    """Write the report to `out` (stdout when None) and return the text."""
    text = format_report(records, fmt)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return text


# --------------------------------------------------------------------------
# command line

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psmatch", description="Run poly-streaming matching experiments.")
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--algo", dest="algorithm", choices=ALGORITHMS)
    ap.add_argument("--k", type=int)
    ap.add_argument("--r", type=int)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--strategy", choices=[s.value for s in Strategy])
    ap.add_argument("--seed", type=int)
    ap.add_argument("--repeats", type=int)
    ap.add_argument("--audit", dest="audits", type=_list, metavar="RULE[,RULE...]",
                    help="dual rules: unirelaxed, unitight, argmax, argmin, argrand[:SEED], or 'all'")
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--out")
    ap.add_argument("--watchdog", type=float, metavar="SECONDS")
    ap.add_argument("--generator", choices=("er", "ba", "ua", "file"))
    ap.add_argument("--n", type=int)
    ap.add_argument("--p", type=float)
    ap.add_argument("--x", type=int)
    ap.add_argument("--paths", type=_list, metavar="PATH[,PATH...]")
    ap.add_argument("--partition-mode", dest="partition_mode", choices=[m.value for m in PartitionMode])
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        cfg = load_config(args.config, overrides)
        records = run_experiment(cfg)
        emit_report(records, cfg.format, cfg.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, StreamFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if any(rec.status == "watchdog" for rec in records):
        print(f"watchdog expired after {cfg.watchdog:g} s", file=sys.stderr)
        return EXIT_WATCHDOG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

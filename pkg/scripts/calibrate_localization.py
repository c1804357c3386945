"""Measure global_access_count / m for the grouped and ungrouped matchers.

Instance: dense G(200, 0.5), weights uniform on [1, n^2], k=8, eps=0.5.
Prints one line per (seed, algorithm) and a summary with the worst ratio.
"""

import argparse

from psmatch.engine import run_ps_mwm
from psmatch.graph import EngineConfig
from psmatch.numa import run_ps_mwm_ld
from psmatch.streams import StreamSetSpec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--epsilon", type=float, default=0.5)
    args = ap.parse_args()

    worst: dict[str, float] = {}
    min_reads = float("inf")
    for seed in range(args.seeds):
        spec = StreamSetSpec("er", n=args.n, p=args.p, k=args.k, seed=seed)
        n, edges = spec.edges()
        m = len(edges)
        for r in (1, 2, 4):
            _, streams = spec.build()
            cfg = EngineConfig(epsilon=args.epsilon, k=args.k, r=r)
            res = run_ps_mwm(streams, cfg, n) if r == 1 else run_ps_mwm_ld(streams, cfg, n)
            label = "psmwm" if r == 1 else f"psmwm-ld r={r}"
            ratio = res.global_access_count / m
            if r == 1:
                min_reads = min(min_reads, res.global_reads / m)
            worst[label] = max(worst.get(label, 0.0), ratio)
            print(f"seed={seed:2d} {label:14s} m={m} stacked={res.stacked_edge_count:4d} "
                  f"reads={res.global_reads:6d} writes={res.global_writes:6d} ratio={ratio:.4f}")
    print("worst access/m:", {k: round(v, 4) for k, v in worst.items()})
    print(f"min psmwm reads/m: {min_reads:.4f}")


if __name__ == "__main__":
    main()

"""Measure effective_iterations / L_min on balanced G(1000, 0.05) streams.

Runs the non-deferrable matcher for k in {2, 4, 8} over a range of seeds and
prints the worst ratio per k.
"""

import argparse

from psmatch.engine import run_ps_mwm
from psmatch.graph import EngineConfig
from psmatch.streams import StreamSetSpec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--p", type=float, default=0.05)
    ap.add_argument("--epsilon", type=float, default=1e-6)
    ap.add_argument("--ks", default="2,4,8")
    args = ap.parse_args()

    for k in (int(x) for x in args.ks.split(",")):
        ratios = []
        for seed in range(args.seeds):
            n, streams = StreamSetSpec("er", n=args.n, p=args.p, k=k, seed=seed).build()
            res = run_ps_mwm(streams, EngineConfig(epsilon=args.epsilon, k=k), n)
            ratios.append(res.effective_iterations / min(res.stream_lengths))
        print(f"k={k}: worst={max(ratios):.4f} mean={sum(ratios) / len(ratios):.4f}")


if __name__ == "__main__":
    main()

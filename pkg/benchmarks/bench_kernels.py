"""Benchmark the compiled simulation kernel against the numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--rounds 5000] [--repeats 3]

Times full runs (gradient sampling, anytime updates, gossip, metric
recording) at a few problem sizes and reports rounds/second per backend plus
the final-state agreement between them.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gossipgrad import topology
from gossipgrad._kernels import available_backends
from gossipgrad.optim import RunConfig, WeightSchedule, run

CASES = [
    ("small  d=10  M=8   ring", dict(dimension=10, topology=topology.Ring(8))),
    ("medium d=50  M=25  torus", dict(dimension=50, topology=topology.Torus(5, 5))),
    ("large  d=100 M=64  torus", dict(dimension=100, topology=topology.Torus(8, 8))),
]


def bench(config: RunConfig, backend: str, repeats: int) -> tuple[float, np.ndarray]:
    best = float("inf")
    final = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = run(config, backend=backend)
        best = min(best, time.perf_counter() - start)
        final = result.final_state.iterates
    return best, final


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=5000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--sigma", type=float, default=1.0)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}   rounds: {args.rounds}   sigma: {args.sigma}")
    if "compiled" not in backends:
        print("compiled kernel not built; benchmarking the fallback alone")

    for label, overrides in CASES:
        config = RunConfig(
            algorithm="datsgd",
            learning_rate=1e-4,
            rounds=args.rounds,
            sigma=args.sigma,
            zeta=1.0,
            schedule=WeightSchedule.constant(),
            seed=1,
            metric_stride=max(1, args.rounds // 20),
            **overrides,
        )
        results = {}
        for backend in backends:
            elapsed, final = bench(config, backend, args.repeats)
            results[backend] = (elapsed, final)
            print(
                f"{label}  {backend:9s} {elapsed:8.3f}s  "
                f"{args.rounds / elapsed:10.0f} rounds/s"
            )
        if len(results) == 2:
            t_py, f_py = results["python"]
            t_c, f_c = results["compiled"]
            drift = np.abs(f_py - f_c).max()
            print(f"{label}  speedup {t_py / t_c:5.2f}x   max |final diff| {drift:.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

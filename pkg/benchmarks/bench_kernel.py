"""Benchmark the compiled kernel against the pure-Python fallback.

Both backends consume identical draw streams, so the comparison is
apples to apples; the script also cross-checks that the final states
agree before reporting throughput.

Usage: python benchmarks/bench_kernel.py [--steps N] [--coupled-steps N]
"""

import argparse
import time

import numpy as np

from fitscape.backend import available_backends, get_impl
from fitscape.rng import stream_key


def bench_population(steps: int) -> dict[str, float]:
    key = stream_key(12345, 0)
    out = {}
    finals = {}
    for name in available_backends():
        kernel = get_impl(name).PopKernel(0.75, 0.5, key)
        t0 = time.perf_counter()
        kernel.run(steps)
        out[name] = time.perf_counter() - t0
        finals[name] = kernel.snapshot()
    if len(finals) == 2:
        for a, b in zip(finals["compiled"], finals["python"]):
            assert np.array_equal(a, b), "backends disagree"
    return out


def bench_coupled(steps: int) -> dict[str, float]:
    key = stream_key(54321, 0)
    grid = np.linspace(0.0, 1.0, 11).tolist()
    out = {}
    results = {}
    for name in available_backends():
        impl = get_impl(name)
        t0 = time.perf_counter()
        results[name] = impl.run_coupled(grid, 0.5, 0.75, 0.5, steps, key)
        out[name] = time.perf_counter() - t0
    if len(results) == 2:
        assert results["compiled"] == results["python"], "backends disagree"
    return out


def show(title: str, steps: int, times: dict[str, float]) -> None:
    print(f"\n{title} ({steps:,} steps)")
    for name, dt in times.items():
        print(f"  {name:>8}: {dt:8.3f}s  ({steps / dt / 1e6:6.2f} Msteps/s)")
    if len(times) == 2:
        print(f"  speedup: {times['python'] / times['compiled']:.1f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--coupled-steps", type=int, default=200_000)
    args = ap.parse_args()
    print("available backends:", ", ".join(available_backends()))
    show("population process", args.steps, bench_population(args.steps))
    show("coupled comparison family (11 chains)", args.coupled_steps,
         bench_coupled(args.coupled_steps))


if __name__ == "__main__":
    main()

"""Timing comparison of the two scheduler kernel backends.

Runs the numba-compiled scalar kernel and the vectorized numpy fallback on
identical inputs, checks they agree, and reports slots/s plus the speedup.
Compile time is paid once up front and excluded from the timings.

Usage:
    python3 benchmarks/bench_sched.py [--ues 8] [--slots 200000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from bazaar import sched_kernel


def build_backends():
    backends = [("numpy", sched_kernel._schedule_numpy)]
    try:
        from numba import njit
    except ImportError:
        print("numba not installed; timing the numpy fallback only")
        return backends
    backends.insert(0, ("numba", njit(cache=True)(sched_kernel._schedule_scalar)))
    return backends


def time_backend(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ues", type=int, default=8)
    parser.add_argument("--slots", type=int, default=200_000)
    parser.add_argument("--stddev", type=float, default=0.3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--repeats", type=int, default=5)
    opts = parser.parse_args()

    rng = np.random.default_rng(opts.seed)
    eff = rng.uniform(0.5, 6.0, opts.ues)
    fading, _ = sched_kernel.draw_fading(opts.ues, opts.slots, opts.seed)
    backends = build_backends()

    print(f"{opts.ues} UEs x {opts.slots} slots, stddev {opts.stddev}, "
          f"seed {opts.seed}, best of {opts.repeats}")
    for policy_name, policy in sched_kernel.POLICY_IDS.items():
        args = (eff, 10e6, opts.stddev, fading, policy)
        results = {}
        timings = {}
        for name, fn in backends:
            fn(*args)  # warm up; first numba call compiles
            timings[name] = time_backend(fn, args, opts.repeats)
            results[name] = fn(*args)

        names = list(timings)
        for a, b in zip(names, names[1:]):
            if not (np.array_equal(results[a][0], results[b][0])
                    and np.array_equal(results[a][1], results[b][1])):
                raise SystemExit(f"{a} and {b} disagree on {policy_name}")

        base = timings[names[-1]]
        for name in names:
            rate = opts.slots / timings[name] / 1e6
            note = f"  ({base / timings[name]:.1f}x vs {names[-1]})" \
                if name != names[-1] else ""
            print(f"  {policy_name:<18} {name:<6} {timings[name] * 1e3:9.2f} ms"
                  f"  {rate:8.2f} Mslot/s{note}")


if __name__ == "__main__":
    main()

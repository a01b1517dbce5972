"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Enumeration is timed over every shard of a (d, N) instance; the chain is
timed over a fixed number of sweeps.  Agreement between the two is
covered by tests/test_kernels.py.
"""
import argparse
import time

import numpy as np

from polyq import kernels
from polyq.exact import shards
from polyq.model import ChargeLaw, Walk, sample_charges

ENUM_CASES = [(1, 16), (2, 9), (3, 7)]
CHAIN_CASES = [(2, 100, 2.0), (2, 400, 8.0), (3, 200, 4.0)]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_enum(impl, d, N, q):
    def go():
        for prefix, plen in shards(d, N):
            impl.enum_stats(q, d, N, prefix, plen)
    return go


def bench_chain(impl, d, N, beta, q, sweeps):
    def go():
        steps = Walk.random(d, N, np.random.default_rng(0)).steps
        core = impl.ChainCore(q, d, steps, beta, [0.0] * d, np.random.PCG64(1))
        core.run(sweeps, False)
    return go


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sweeps", type=int, default=200)
    args = ap.parse_args()
    impls = kernels.implementations()
    names = sorted(impls)
    print(f"implementations: {', '.join(names)} (default: {kernels.IMPLEMENTATION})")

    print("\nexhaustive enumeration (all paths)")
    print(f"{'d':>2} {'N':>3} {'paths':>10} " + " ".join(f"{n + ' s':>12}" for n in names) + "  speedup")
    for d, N in ENUM_CASES:
        q = sample_charges(ChargeLaw.rademacher(), N, 1).astype(np.float64)
        t = {n: best_of(bench_enum(impls[n], d, N, q), args.repeat) for n in names}
        sp = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else ""
        print(f"{d:>2} {N:>3} {(2 * d) ** (N - 1):>10} " + " ".join(f"{t[n]:12.4f}" for n in names) + sp)

    print(f"\nsuffix-shift Metropolis ({args.sweeps} sweeps)")
    print(f"{'d':>2} {'N':>4} {'beta':>5} " + " ".join(f"{n + ' s':>12}" for n in names) + "  speedup")
    for d, N, beta in CHAIN_CASES:
        q = sample_charges(ChargeLaw.rademacher(), N, 2).astype(np.float64)
        t = {}
        for n in names:
            reps = args.repeat if n == "cython" else 1
            t[n] = best_of(bench_chain(impls[n], d, N, beta, q, args.sweeps), reps)
        sp = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else ""
        print(f"{d:>2} {N:>4} {beta:>5} " + " ".join(f"{t[n]:12.4f}" for n in names) + sp)


if __name__ == "__main__":
    main()

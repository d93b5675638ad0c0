"""Time the compiled and numpy path-sum kernels on the same inputs.

    python benchmarks/bench_kernels.py [--paths 32] [--steps 2000] [--points 5] [--repeat 5]
"""

import argparse
import statistics
import time

import numpy as np

from ergoreg import fourier_core as fc
from ergoreg import kernels


def make_inputs(paths, steps, points, K, seed=0):
    rng = np.random.default_rng(seed)
    modes = np.array([k for k in fc.lattice(1, K) if k >= tuple(-v for v in k)], dtype=np.int64)
    m = len(modes)
    inc = rng.normal(scale=0.1, size=(paths, steps, 1))
    amp = rng.normal(size=(points, m)) + 1j * rng.normal(size=(points, m))
    step = np.exp((1j * rng.uniform(-1, 1, (points, m)) - 0.1) * 0.01)
    return inc, modes, amp, step


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=32)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--points", type=int, default=5)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    inc, modes, amp, step = make_inputs(args.paths, args.steps, args.points, args.K)
    impls = kernels.backends()
    print(f"paths={args.paths} steps={args.steps} points={args.points} modes={len(modes)}")
    ref = None
    results = {}
    for name, fn in impls.items():
        out = fn(inc, modes, amp, step, 0.3, 0.01)
        if ref is None:
            ref = out
        err = float(np.max(np.abs(out - ref)))
        best, med = best_of(lambda: fn(inc, modes, amp, step, 0.3, 0.01), args.repeat)
        results[name] = best
        print(f"{name:>8}: best {best * 1e3:9.2f} ms  median {med * 1e3:9.2f} ms  max|diff| {err:.2e}")
    if "cython" in results:
        print(f" speedup: {results['python'] / results['cython']:.2f}x (python / cython)")
    else:
        print("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()

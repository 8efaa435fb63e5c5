"""Compiled vs pure-Python kernels on synthetic workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints one line per (kernel, backend) with the best wall time over
``--repeat`` runs and the speedup of the compiled backend.
"""

import argparse
import time

import numpy as np

from seqstruct import _pykernels

try:
    from seqstruct import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return min(times)


def workloads(scale, seed=0):
    rng = np.random.default_rng(seed)
    n_users, length, n_items = int(2000 * scale), 50, 200
    items = rng.integers(0, n_items, size=n_users * length)
    offsets = np.arange(0, n_users * length + 1, length)
    n_rows = int(200_000 * scale)
    users = rng.integers(0, int(20_000 * scale), size=n_rows)
    # popularity skew so the k-core actually peels several layers
    kitems = np.minimum(rng.zipf(1.3, size=n_rows) - 1, int(10_000 * scale) - 1)
    return {
        "count_windows n=2": lambda m: m.count_windows(items, offsets, 2),
        "count_windows n=3": lambda m: m.count_windows(items, offsets, 3),
        "kcore_mask k=5": lambda m: m.kcore_mask(users, kitems, int(users.max()) + 1, int(kitems.max()) + 1, 5),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0)
    args = parser.parse_args(argv)

    if _ckernels is None:
        print("compiled extension not built; only the Python backend is timed")
    print(f"{'kernel':<20} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name, run in workloads(args.scale).items():
        py = best_of(lambda: run(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<20} {py:>10.4f} {'-':>10} {'-':>8}")
            continue
        cy = best_of(lambda: run(_ckernels), args.repeat)
        a, b = run(_pykernels), run(_ckernels)
        same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<20} {py:>10.4f} {cy:>10.4f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()

"""Time the p-median kernels under the numba and numpy backends.

Usage: python benchmarks/bench_kernels.py [--sizes 100 300 1000] [--repeat 20]
"""

import argparse
import time

import numpy as np

from sensorplace import _kernels
from sensorplace.network import CostMatrix


def random_cost(rng, n):
    pts = rng.uniform(size=(n, 2))
    return CostMatrix.from_matrix(np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1)))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'n':>6}" + "".join(f"{b:>12}" for b in _kernels.available_backends())
          + f"{'speedup':>10}")
    for n in args.sizes:
        cost = random_cost(rng, n)
        m = max(2, n // 20)
        z = np.full(n, m / n)
        sel = np.sort(rng.choice(n, m, replace=False))
        kernels = {
            "nearest_sensor_sum": lambda: _kernels.nearest_sensor_sum(cost.C, sel),
            "greedy_fill": lambda: _kernels.greedy_fill(cost.C, cost.order, z),
        }
        for name, fn in kernels.items():
            row = {}
            for backend in _kernels.available_backends():
                _kernels.set_backend(backend)
                fn()  # compile / warm up
                row[backend] = best_of(fn, args.repeat)
            speedup = row.get("numpy", np.nan) / row.get("numba", np.nan)
            print(f"{name:<20}{n:>6}" + "".join(f"{row[b] * 1e3:>10.3f}ms" for b in row)
                  + f"{speedup:>9.1f}x")


if __name__ == "__main__":
    main()

"""Benchmark the batch objective kernels: numba @njit vs pure numpy.

Times the two hot kernels on a synthetic lattice batch and reports node
throughput for each path, plus an end-to-end grid_search timing at the
oracle resolution used by the verification suite.

Run:
    python benchmarks/bench_kernels.py [--nodes 2000000] [--repeats 5]

Set RFLOC_DISABLE_NUMBA=1 to check what the package falls back to when the
JIT path is unavailable.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rfloc import Point, grid_search, trilateration_objective
from rfloc import _kernels
from rfloc.trilat import TrilaterationProblem


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description="rfloc kernel benchmark")
    parser.add_argument("--nodes", type=int, default=2_000_000,
                        help="batch size per kernel call")
    parser.add_argument("--repeats", type=int, default=5,
                        help="repetitions (best time wins)")
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    points = rng.uniform(-1000.0, 1000.0, size=(args.nodes, 3))
    anchors = np.array([[0.0, 0.0, 0.0], [500.0, 0.0, 0.0], [0.0, 500.0, 0.0]])
    dists = np.array([300.0, 400.0, 500.0])
    deltas = np.array([-100.0, 150.0])

    paths = [("numpy", _kernels.sum_sq_range_residuals_numpy,
              _kernels.sum_sq_tdoa_residuals_numpy)]
    if _kernels.HAVE_NUMBA:
        # warm up the JIT before timing
        _kernels.sum_sq_range_residuals_numba(points[:16], anchors, dists)
        _kernels.sum_sq_tdoa_residuals_numba(points[:16], anchors, deltas)
        paths.append(("numba", _kernels.sum_sq_range_residuals_numba,
                      _kernels.sum_sq_tdoa_residuals_numba))
    else:
        print("numba unavailable or disabled; timing the numpy path only")

    print(f"batch={args.nodes} nodes, repeats={args.repeats}, "
          f"active path={'numba' if _kernels.USING_NUMBA else 'numpy'}")
    print(f"{'kernel':<24} {'path':<7} {'best [s]':>10} {'Mnodes/s':>10}")
    for name, range_fn, tdoa_fn in paths:
        t = _time(lambda: range_fn(points, anchors, dists), args.repeats)
        print(f"{'range residuals^2':<24} {name:<7} {t:>10.4f} {args.nodes / t / 1e6:>10.1f}")
        t = _time(lambda: tdoa_fn(points, anchors, deltas), args.repeats)
        print(f"{'tdoa residuals^2':<24} {name:<7} {t:>10.4f} {args.nodes / t / 1e6:>10.1f}")

    # End-to-end oracle sweep at the verification resolution (9e6 nodes).
    problem = TrilaterationProblem(
        (Point.of(0, 0), Point.of(10, 0), Point.of(5, 10)), (5.0, 5.0, 5.0), 2)
    objective = trilateration_objective(problem)
    t0 = time.perf_counter()
    node, value = grid_search(objective, [(-10.0, 20.0), (-10.0, 20.0)], 0.01)
    elapsed = time.perf_counter() - t0
    print(f"grid_search [-10,20]^2 @0.01 ({'numba' if _kernels.USING_NUMBA else 'numpy'}): "
          f"{elapsed:.2f} s -> node ({node.x:.2f}, {node.y:.2f}), value {value:.4f}")


if __name__ == "__main__":
    main()

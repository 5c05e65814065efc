#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs both implementations on feed-sized workloads (a day of pings
projected onto a route shape; an M-run remaining-time simulation) and
prints the timing ratio. JIT compile time is excluded by a warmup call.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from buslink import accel  # noqa: E402


def timeit(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def projection_workload(n_points=200_000, n_vertices=40, seed=0):
    rng = np.random.default_rng(seed)
    vx = np.cumsum(rng.uniform(50, 200, n_vertices))
    vy = np.cumsum(rng.normal(0, 15, n_vertices))
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(vx), np.diff(vy)))))
    qx = rng.uniform(vx[0] - 100, vx[-1] + 100, n_points)
    qy = rng.uniform(vy.min() - 60, vy.max() + 60, n_points)
    return qx, qy, vx, vy, cum


def markov_workload(m_runs=100_000, n_links=6, seed=1):
    rng = np.random.default_rng(seed)
    steps = rng.uniform(3, 25, n_links)
    p_stay = (steps - 1.0) / steps
    u_road = rng.random((m_runs, n_links))
    u_dwell = rng.random((m_runs, n_links))
    dwell_len = rng.integers(20, 400, n_links)
    dwell_start = np.concatenate(([0], np.cumsum(dwell_len)[:-1])).astype(np.int64)
    dwell_flat = rng.exponential(10.0, int(dwell_len.sum()))
    x_len = rng.integers(0, 3, n_links)
    x_start = np.concatenate(([0], np.cumsum(x_len)[:-1])).astype(np.int64)
    total_x = int(x_len.sum())
    x_mu = rng.uniform(2.0, 3.0, total_x)
    x_sigma = rng.uniform(0.2, 0.5, total_x)
    z_x = rng.standard_normal((m_runs, total_x))
    return (p_stay, u_road, dwell_flat, dwell_start, dwell_len.astype(np.int64),
            u_dwell, x_mu, x_sigma, x_start, x_len.astype(np.int64), z_x, 5.0)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not accel.USE_NUMBA:
        print("numba backend unavailable (BUSLINK_NO_NUMBA set or numba missing); "
              "nothing to compare")
        return

    proj = projection_workload()
    mark = markov_workload()

    # warm up the JIT so compile time stays out of the numbers
    accel._project_jit(proj[0][:64], proj[1][:64], proj[2], proj[3], proj[4])
    accel._markov_jit(mark[0], mark[1][:64], mark[2], mark[3], mark[4],
                      mark[5][:64], mark[6], mark[7], mark[8], mark[9],
                      mark[10][:64], mark[11])

    rows = []
    t_np = timeit(accel._project_numpy, proj, args.repeat)
    t_nb = timeit(accel._project_jit, proj, args.repeat)
    rows.append(("projection (200k pings x 39 segments)", t_np, t_nb))

    t_np = timeit(accel._markov_numpy, mark, args.repeat)
    t_nb = timeit(accel._markov_jit, mark, args.repeat)
    rows.append(("markov offsets (100k runs x 6 links)", t_np, t_nb))

    print(f"{'kernel':<40} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, t_np, t_nb in rows:
        print(f"{name:<40} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()

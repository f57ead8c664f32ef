"""Time one grid_small loading run on each available kernel.

Usage: python3 benchmarks/bench_loading.py [--repeat N] [--demand-scale X]
"""

import argparse
import time

import numpy as np

from metropath.clogit import shares_from_beta
from metropath.loading import LoadingModel, available_backends
from metropath.synthgen import SYNTHETIC_BETA, build_toy_network


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--demand-scale", type=float, default=1.0)
    args = parser.parse_args()

    inst = build_toy_network("grid_small", demand_scale=args.demand_scale)
    sc = inst.scenario()
    q = inst.od_flows(sc)
    shares = shares_from_beta(SYNTHETIC_BETA, sc.design, sc.index.group_ptr)
    model = LoadingModel(sc, inst.sim_config)
    print(f"grid_small: {int(q.sum())} passengers, {sc.index.n_vars} share variables")

    results = {}
    for backend in available_backends():
        model.run(q, shares, seed=0, backend=backend)  # warm caches
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            res = model.run(q, shares, seed=0, backend=backend)
            times.append(time.perf_counter() - t0)
        results[backend] = res
        print(f"{backend:>7}: best {min(times) * 1e3:8.1f} ms  median {np.median(times) * 1e3:8.1f} ms")

    if len(results) == 2:
        same = np.array_equal(results["python"].entry_exit, results["cython"].entry_exit)
        print(f"entry-exit tables identical across kernels: {same}")


if __name__ == "__main__":
    main()

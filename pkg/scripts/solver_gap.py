"""Compare the allocation solver against exhaustive search on small grids.

Reports the objective ratio distribution and the time per solve for a few
node budgets.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sgdvideo.resource_alloc import RateGrid, exhaustive_allocation, objective, solve_allocation
from sgdvideo.video_model import QualityModel


def random_case(rng):
    N = int(rng.integers(1, 4))
    models = []
    for _ in range(2):
        L = int(rng.integers(1, 3))
        gaps = rng.uniform(0.5, 6.0, L)
        slopes = sorted(rng.uniform(0.2, 2.0, L), reverse=True)
        Q = [30.0]
        for l in range(1, L):
            Q.append(Q[-1] + slopes[l] * gaps[l])
        models.append(QualityModel(tuple(np.cumsum(gaps)), tuple(Q), tuple(slopes)))
    L1 = max(m.num_layers for m in models)
    rates = np.round(rng.uniform(0, 4, (N, 2, 2, L1)), 2)
    rates[rng.random(rates.shape) < 0.15] = 0.0
    return RateGrid(rates), models


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = [random_case(rng) for _ in range(args.cases)]
    optimum = [objective(exhaustive_allocation(g, m), g, m) for g, m in cases]
    for budget in (0, 50, 500, 20000):
        ratios, t0 = [], time.perf_counter()
        for (g, m), best in zip(cases, optimum):
            got = objective(solve_allocation(g, m, node_budget=budget), g, m)
            ratios.append(got / best if best > 0 else 1.0)
        dt = (time.perf_counter() - t0) / len(cases)
        r = np.array(ratios)
        print(f"budget {budget:>6}: min {r.min():.4f} mean {r.mean():.5f} "
              f"exact {np.mean(r > 1 - 1e-9):.1%}  {dt * 1e3:.2f} ms/solve")


if __name__ == "__main__":
    main()

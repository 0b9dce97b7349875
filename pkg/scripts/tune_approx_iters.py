"""Smallest PCG iteration count whose voltages stay within a fraction of sigma.

Checks the truth image, the flat starting image and a few prior-like
random images; prints the worst error (in units of sigma) per count.
"""

from __future__ import annotations

import argparse

import numpy as np

from eitmcmc.experiment.data import NOISE_RATIO, generate_data, truth_image
from eitmcmc.field_grid import GridSpec
from eitmcmc.forward_solver import ApproxModel, FineModel


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--side", type=int, default=12)
    p.add_argument("--fraction", type=float, default=0.1, help="allowed max error as a fraction of sigma")
    p.add_argument("--max-iters", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()

    grid = GridSpec(a.side)
    truth = truth_image(a.side)
    _, sigma = generate_data(truth, NOISE_RATIO)
    rng = np.random.default_rng(a.seed)
    fields = [truth.values, np.full(grid.m, 3.5)] + [rng.uniform(2.5, 4.5, grid.m) for _ in range(3)]
    fine = FineModel(grid)
    refs = [fine(x) for x in fields]
    for k in range(1, a.max_iters + 1):
        model = ApproxModel(grid, k)
        worst = max(np.max(np.abs(model(x) - r)) for x, r in zip(fields, refs)) / sigma
        print(f"iters {k:3d}  max error {worst:.3e} sigma")
        if worst < a.fraction:
            print(f"-> {k} iterations suffice")
            return


if __name__ == "__main__":
    main()

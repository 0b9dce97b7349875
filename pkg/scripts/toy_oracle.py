"""Run every kernel on the enumerable toy posterior and report TV distances."""

from __future__ import annotations

import argparse

import numpy as np

from eitmcmc.experiment.toy import ToyPosterior, empirical_distribution, enumerate_posterior, tv_distance
from eitmcmc.samplers import AMSDADriver, CoupledDriver, DADriver, MSDADriver, RwmDriver, SingleSiteDriver
from eitmcmc.samplers.runner import chain_rngs


def drivers(toy: ToyPosterior, seed: int):
    fine, approx, coarse = toy.posterior("fine"), toy.posterior("approx"), toy.posterior("coarse")
    x0 = np.full(4, 3.0)
    r = chain_rngs(seed, 2)
    return {
        "single_site": SingleSiteDriver(fine, x0, r[0], 0.8, order="random", window=200),
        "rwm": RwmDriver(fine, x0, r[0], np.eye(4), alpha=0.3, window=200),
        "coupled": CoupledDriver(fine, approx, x0, r, r=3, sigma_fine=0.8, window=200),
        "da": DADriver(fine, approx, x0, r[0], 0.8, order="random", window=200),
        "msda": MSDADriver(fine, coarse, x0, r[0], n_step=10, sigma_z=0.5),
        "amsda": AMSDADriver(fine, coarse, x0, r[0], n_step=10, sigma_z=0.5, refresh_every=10),
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--burn", type=int, default=2_000)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--seed", type=int, default=10)
    a = p.parse_args()

    toy = ToyPosterior(q=a.q, sigma=a.sigma)
    exact = enumerate_posterior(toy)
    print("exact:", np.array2string(exact, precision=4))
    print(f"coarse-model posterior TV from exact: {tv_distance(exact, enumerate_posterior(toy, 'coarse')):.3f}")
    for kind, d in drivers(toy, a.seed).items():
        d.initialize()
        for _ in range(a.burn):
            d.step()
            d.tune()
        d.end_burn_in()
        xs = np.empty((a.samples, 4))
        for k in range(a.samples):
            d.step()
            xs[k] = d.chain.x
        tv = tv_distance(exact, empirical_distribution(toy, xs))
        f, ap, c = d.counters()
        print(f"{kind:12s} TV {tv:.4f}  solves fine={f} approx={ap} coarse={c}")


if __name__ == "__main__":
    main()

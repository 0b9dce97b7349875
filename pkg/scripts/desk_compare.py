"""Single-site Metropolis vs. adaptive multiple-step DA at equal effort.

    python3 scripts/desk_compare.py --budget 2000 --out desk_runs

Writes both traces under --out and prints mode-switch counts of the
tracked pixels, acceptance rates and solver counts.
"""

from __future__ import annotations

import argparse
import time

from eitmcmc.experiment.desk import DESK_BUDGET, DESK_N_STEP, DESK_THIN, efficiency_comparison


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--budget", type=float, default=DESK_BUDGET, help="effort budget in units of m")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-step", type=int, default=DESK_N_STEP)
    p.add_argument("--refresh", type=int, default=10, help="outer steps between bias snapshots")
    p.add_argument("--thin", type=int, default=DESK_THIN)
    p.add_argument("--out", default=None)
    a = p.parse_args()

    t0 = time.perf_counter()
    res = efficiency_comparison(a.budget, a.seed, a.n_step, a.refresh, thin=a.thin, out_dir=a.out)
    print(f"tracked pixels {res.tracked.tolist()}")
    for kind in ("single_site", "amsda"):
        f, ap, c = res.counts[kind]
        r1, r2 = res.rates[kind]
        print(f"{kind:12s} switches {res.switches[kind].tolist()} total {int(res.switches[kind].sum())}  "
              f"rates {r1:.3f}/{r2:.3f}  solves fine={f} coarse={c}")
    print(f"ratio amsda/single_site = {res.ratio:.2f}  ({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()

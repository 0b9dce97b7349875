"""Command-line front end.

    eitmcmc gen-data   truth image -> noisy voltages, noise sd
    eitmcmc run        config -> trace CSV + checkpoint (resumable)
    eitmcmc summarize  trace -> diagnostics text + mean image
    eitmcmc compare    traces -> cost-aligned table
    eitmcmc oracle     toy trace -> total-variation distance to the exact posterior

Exit status: 0 success, 1 numerical failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..field_grid import FieldFormatError, atomic_write_text, format_matrix, load_field, save_field, save_pgm
from ..forward_solver import ConductivityDomainError, FactorizationError, VoltageSet, save_voltages
from ..priors import GmrfPrior, TricubePrior
from ..samplers.runner import run
from ..samplers.state import ConfigurationError, CostWeights
from ..samplers.trace import Trace, TraceFormatError
from .build import build_driver, build_problem, build_settings
from .config import ConfigError, load_config
from .data import NOISE_RATIO, default_tracked, generate_data, truth_image
from .diagnostics import compare, summarize
from .toy import ToyPosterior, empirical_distribution, enumerate_posterior, tv_distance

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_gen_data(a) -> int:
    truth = load_field(a.truth) if a.truth else truth_image(a.side)
    y, sigma = generate_data(truth, a.ratio, a.seed, sigma=a.sigma)
    out = _out_dir(a.out)
    save_voltages(VoltageSet.from_flat(y), out / "data.csv")
    atomic_write_text(out / "sigma.txt", repr(sigma) + "\n")
    save_field(truth, out / "truth.txt")
    save_pgm(truth.values, truth.grid.side, out / "truth.pgm")
    print(f"wrote {out / 'data.csv'}  sigma={sigma!r}")
    return EXIT_OK


def cmd_run(a) -> int:
    cfg = load_config(a.config, a.set or [])
    out = _out_dir(cfg.output.dir)
    atomic_write_text(out / "config.ini", cfg.to_ini())
    prob = build_problem(cfg)
    driver = build_driver(cfg, prob)
    settings = build_settings(cfg, prob, out / "trace.csv", out / "checkpoint.json", a.resume)
    trace = run(driver, settings)
    f, ap, c = driver.counters()
    r1, r2 = driver.rates()
    print(f"{cfg.kernel.kind}: {len(trace)} records, solver calls fine={f} approx={ap} coarse={c}, "
          f"acceptance stage1={r1:.3f} stage2={r2:.3f}")
    return EXIT_OK


def cmd_summarize(a) -> int:
    trace = Trace.load(a.trace)
    s = summarize(trace, a.burn)
    out = _out_dir(a.out)
    n = len(trace.columns)
    side = int(round(np.sqrt(n)))
    full = side * side == n and np.array_equal(trace.columns, np.arange(n))
    pixels = a.pixels
    if pixels is None and full and side >= 8:
        pixels = default_tracked(side)
    report = s.report(pixels)
    atomic_write_text(out / "diagnostics.txt", report)
    if full:
        atomic_write_text(out / "mean.txt", format_matrix(s.mean.reshape(side, side)))
        atomic_write_text(out / "variance.txt", format_matrix(s.variance.reshape(side, side)))
        save_pgm(s.mean, side, out / "mean.pgm")
    else:
        print("trace holds a pixel subset; no mean image written")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_compare(a) -> int:
    traces = [Trace.load(p) for p in a.traces]
    m = a.m
    if not m:
        cols = traces[0].columns
        if not np.array_equal(cols, np.arange(cols.size)):
            raise ConfigError("the first trace records a subset of components; pass --m")
        m = cols.size
    w = CostWeights(*a.weights) if a.weights else CostWeights()
    table = compare(traces, a.pixel, m, w)
    labels = a.labels or [Path(p).parent.name or Path(p).stem for p in a.traces]
    if len(labels) != len(traces):
        raise ConfigError("--labels needs one label per trace")
    lines = [",".join(["effort_per_m"] + labels)]
    lines += [",".join(repr(float(v)) for v in row) for row in table]
    text = "\n".join(lines) + "\n"
    if a.out:
        atomic_write_text(a.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(a) -> int:
    prior = GmrfPrior(beta=a.beta) if a.prior == "gmrf" else TricubePrior(beta=a.beta, s=a.s)
    toy = ToyPosterior(q=a.q, sigma=a.sigma, prior=prior)
    exact = enumerate_posterior(toy)
    trace = Trace.load(a.trace)
    if len(trace.columns) != 4:
        raise ConfigError(f"{a.trace}: toy traces record 4 parameters, found {len(trace.columns)}")
    emp = empirical_distribution(toy, trace.values[a.burn:])
    tv = tv_distance(exact, emp)
    lines = [f"states {toy.n_states}", f"records {len(trace) - a.burn}", f"tv_distance {tv:.6f}",
             "state exact empirical"]
    lines += [f"{k} {exact[k]:.6f} {emp[k]:.6f}" for k in range(toy.n_states)]
    text = "\n".join(lines) + "\n"
    if a.out:
        atomic_write_text(a.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eitmcmc", description="Delayed-acceptance MCMC for impedance tomography.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="simulate noisy electrode voltages")
    g.add_argument("--truth", help="field text file (default: built-in two-inclusion image)")
    g.add_argument("--side", type=int, default=12, help="grid side for the built-in image")
    g.add_argument("--ratio", type=float, default=NOISE_RATIO, help="sigma / max|eta(truth)|")
    g.add_argument("--sigma", type=float, default=None, help="explicit noise sd (overrides --ratio)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="data")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run a sampler from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config entry")
    r.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output dir")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="diagnostics for one trace")
    s.add_argument("trace")
    s.add_argument("--out", default="summary")
    s.add_argument("--burn", type=int, default=0, help="records to discard")
    s.add_argument("--pixels", type=int, nargs="+", help="pixels to list (default: the built-in tracked three)")
    s.set_defaults(func=cmd_summarize)

    c = sub.add_parser("compare", help="align traces on a shared cost axis")
    c.add_argument("traces", nargs="+")
    c.add_argument("--pixel", type=int, required=True)
    c.add_argument("--m", type=int, default=0, help="parameter dimension (default: width of a full-field first trace)")
    c.add_argument("--weights", type=float, nargs=3, metavar=("FINE", "APPROX", "COARSE"))
    c.add_argument("--labels", nargs="+")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("oracle", help="TV distance of a toy trace from the enumerated posterior")
    o.add_argument("--trace", required=True)
    o.add_argument("--q", type=int, default=2)
    o.add_argument("--sigma", type=float, default=0.05)
    o.add_argument("--prior", choices=("tricube", "gmrf"), default="tricube")
    o.add_argument("--beta", type=float, default=0.5)
    o.add_argument("--s", type=float, default=0.3)
    o.add_argument("--burn", type=int, default=0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, FieldFormatError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConductivityDomainError, FactorizationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

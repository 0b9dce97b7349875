"""Budgeted execution of any kernel: burn-in with tuning, thinned
recording, checkpoint and resume.

Cost is measured as *effort*, the weighted solver count of
``CostWeights``; budgets are given in effort units of m (one sweep's worth
of fine solves), so a budget of ``B`` stops once effort reaches ``B * m``.
Burn-in counts against the budget.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..field_grid import atomic_write_text
from ..posterior import (AdaptiveCoarsePosterior, BiasState, Evaluation, Posterior, Receipt, load_bias,
                         save_bias)
from .kernels import (RwmProposal, amsda_step, da_sweep, initial_bias, metropolis_coupled_step, msda_step,
                      rwm_step, single_site_sweep)
from .state import ChainState, ConfigurationError, CostWeights, Counters, Tally
from .tuning import ScaleTuner
from .trace import Trace

KERNELS = ("single_site", "rwm", "coupled", "da", "msda", "amsda")


def chain_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-chain streams spawned from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# -- (de)serialisation of chain state ---------------------------------------


def _eval_to_dict(e: Evaluation) -> dict:
    return {"log_prior": e.log_prior, "log_lik": e.log_lik,
            "eta": None if e.eta is None else e.eta.tolist()}


def _eval_from_dict(d: dict) -> Evaluation:
    eta = None if d["eta"] is None else np.array(d["eta"], dtype=float)
    return Evaluation(d["log_prior"], d["log_lik"], eta, Receipt())


def chain_to_dict(c: ChainState) -> dict:
    return {
        "x": c.x.tolist(),
        "rng": c.rng.bit_generator.state,
        "counters": [c.counters.fine, c.counters.approx, c.counters.coarse],
        "tallies": {k: [t.accepted, t.proposed] for k, t in c.tallies.items()},
        "cache": {k: _eval_to_dict(e) for k, e in c.cache.items()},
    }


def chain_from_dict(d: dict) -> ChainState:
    rng = np.random.default_rng()
    rng.bit_generator.state = d["rng"]
    c = ChainState(np.array(d["x"], dtype=float), rng, Counters(*d["counters"]))
    c.tallies = {k: Tally(*v) for k, v in d["tallies"].items()}
    c.cache = {k: _eval_from_dict(v) for k, v in d["cache"].items()}
    return c


# -- drivers -----------------------------------------------------------------


class Driver:
    """One kernel bound to its posteriors and tunable parameters.

    ``chains[0]`` is the chain that gets recorded.  ``tuned`` maps a
    parameter name to the index of the chain whose stage-one acceptance
    drives its tuner.
    """

    kind = ""

    def __init__(self, posterior: Posterior, chains: list[ChainState], params: dict[str, float],
                 tuned: dict[str, int] | None = None, target: float = 0.45, window: int = 100):
        self.posterior = posterior
        self.chains = chains
        self.params = dict(params)
        self.tuners = {name: ScaleTuner(self.params[name], target, window) for name in (tuned or {})}
        self._tuned_chain = dict(tuned or {})
        self._seen = {name: (0, 0) for name in self.tuners}

    @property
    def dim(self) -> int:
        return self.posterior.dim

    @property
    def chain(self) -> ChainState:
        return self.chains[0]

    def initialize(self) -> None:
        for c in self.chains:
            c.evaluation(self.posterior)

    def step(self) -> None:
        raise NotImplementedError

    def counters(self) -> tuple[int, int, int]:
        f = sum(c.counters.fine for c in self.chains)
        a = sum(c.counters.approx for c in self.chains)
        co = sum(c.counters.coarse for c in self.chains)
        return f, a, co

    def effort(self, w: CostWeights) -> float:
        f, a, c = self.counters()
        return w.fine * f + w.approx * a + w.coarse * c

    def rates(self) -> tuple[float, float]:
        t = self.chain.tallies
        return t["stage1"].rate, t["stage2"].rate

    def tune(self) -> None:
        for name, tuner in self.tuners.items():
            t = self.chains[self._tuned_chain[name]].tallies["stage1"]
            a0, p0 = self._seen[name]
            self.params[name] = tuner.observe(t.accepted - a0, t.proposed - p0)
            self._seen[name] = (t.accepted, t.proposed)

    def end_burn_in(self) -> None:
        for t in self.tuners.values():
            t.freeze()
        for c in self.chains:
            c.reset_tallies()
        self._seen = {name: (0, 0) for name in self.tuners}

    def to_dict(self, aux_path: Path | None = None) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "tuners": {k: t.to_dict() for k, t in self.tuners.items()},
            "seen": self._seen,
            "chains": [chain_to_dict(c) for c in self.chains],
        }

    def load_dict(self, d: dict, aux_path: Path | None = None) -> None:
        if d["kind"] != self.kind:
            raise ConfigurationError(f"checkpoint holds a {d['kind']!r} run, not {self.kind!r}")
        self.params = dict(d["params"])
        self.tuners = {k: ScaleTuner.from_dict(v) for k, v in d["tuners"].items()}
        self._seen = {k: tuple(v) for k, v in d["seen"].items()}
        self.chains = [chain_from_dict(c) for c in d["chains"]]


class SingleSiteDriver(Driver):
    kind = "single_site"

    def __init__(self, posterior, x0, rng, sigma_z=0.5, order="deterministic", tune=True, target=0.45,
                 window=None):
        super().__init__(posterior, [ChainState(x0, rng)], {"sigma_z": sigma_z},
                         {"sigma_z": 0} if tune else None, target, window or posterior.dim)
        self.order = order

    def step(self):
        single_site_sweep(self.chain, self.posterior, self.params["sigma_z"], self.order)


class RwmDriver(Driver):
    kind = "rwm"

    def __init__(self, posterior, x0, rng, Sigma_z=None, alpha=None, tune=True, target=0.3, window=100):
        m = posterior.dim
        Sigma_z = np.eye(m) if Sigma_z is None else Sigma_z
        alpha = (2.38**2 / m) * 0.01 if alpha is None else alpha
        self.proposal = RwmProposal(Sigma_z, alpha)
        super().__init__(posterior, [ChainState(x0, rng)], {"alpha": alpha},
                         {"alpha": 0} if tune else None, target, window)

    def step(self):
        self.proposal.alpha = self.params["alpha"]
        rwm_step(self.chain, self.posterior, self.proposal)


class DADriver(Driver):
    kind = "da"

    def __init__(self, fine, surrogate, x0, rng, sigma_z=0.5, order="deterministic", tune=True,
                 target=1.0 / 3.0, window=None):
        super().__init__(fine, [ChainState(x0, rng)], {"sigma_z": sigma_z},
                         {"sigma_z": 0} if tune else None, target, window or fine.dim)
        self.surrogate = surrogate
        self.order = order

    def initialize(self):
        super().initialize()
        self.chain.evaluation(self.surrogate)

    def step(self):
        da_sweep(self.chain, self.posterior, self.surrogate, self.params["sigma_z"], self.order)


class MSDADriver(Driver):
    kind = "msda"

    def __init__(self, fine, surrogate, x0, rng, n_step=100, sigma_z=0.3, tune=False, target=0.45,
                 window=None):
        super().__init__(fine, [ChainState(x0, rng)], {"sigma_z": sigma_z},
                         {"sigma_z": 0} if tune else None, target, window or fine.dim)
        self.surrogate = surrogate
        self.n_step = int(n_step)

    def initialize(self):
        super().initialize()
        self.chain.evaluation(self.surrogate)

    def step(self):
        msda_step(self.chain, self.posterior, self.surrogate, self.n_step, self.params["sigma_z"])


class AMSDADriver(Driver):
    """``refresh_every`` outer steps share one bias snapshot in the
    surrogate; 1 refreshes after every bias update."""

    kind = "amsda"

    def __init__(self, fine, coarse, x0, rng, n_step=100, sigma_z=0.3, rule="welford",
                 update="every_step", refresh_every=1, tune=False, target=0.45, window=None):
        super().__init__(fine, [ChainState(x0, rng)], {"sigma_z": sigma_z},
                         {"sigma_z": 0} if tune else None, target, window or fine.dim)
        if refresh_every < 1:
            raise ConfigurationError("refresh_every must be >= 1")
        self.coarse = coarse
        self.n_step = int(n_step)
        self.rule = rule
        self.update = update
        self.refresh_every = int(refresh_every)
        self.bias: BiasState | None = None
        self.surrogate: AdaptiveCoarsePosterior | None = None
        self.outer_steps = 0

    def _snapshot(self, bias: BiasState) -> AdaptiveCoarsePosterior:
        c = self.coarse
        return AdaptiveCoarsePosterior(c.y, c.noise, c.prior, c.model, bias, c.dim)

    def initialize(self):
        super().initialize()
        if self.bias is None:
            self.bias = initial_bias(self.chain, self.posterior, self.coarse)
        if self.surrogate is None:
            self.surrogate = self._snapshot(self.bias)

    def step(self):
        _, self.bias = amsda_step(self.chain, self.posterior, self.surrogate, self.bias, self.n_step,
                                  self.params["sigma_z"], self.rule, self.update)
        self.outer_steps += 1
        if self.outer_steps % self.refresh_every == 0:
            self.surrogate = self._snapshot(self.bias)

    def to_dict(self, aux_path=None):
        d = super().to_dict()
        d["outer_steps"] = self.outer_steps
        if aux_path is not None:
            save_bias(self.bias, str(aux_path) + ".bias")
            save_bias(self.surrogate.bias, str(aux_path) + ".bias_snapshot")
        return d

    def load_dict(self, d, aux_path=None):
        super().load_dict(d)
        self.outer_steps = d["outer_steps"]
        if aux_path is None:
            raise ConfigurationError("adaptive checkpoint needs its bias files")
        self.bias = load_bias(str(aux_path) + ".bias")
        self.surrogate = self._snapshot(load_bias(str(aux_path) + ".bias_snapshot"))


class CoupledDriver(Driver):
    """Fine chain (recorded) and surrogate chain with swaps.  Sweeps run
    sequentially; the two chains share nothing between swaps."""

    kind = "coupled"

    def __init__(self, fine, approx, x0, rngs, r=3, sigma_fine=0.5, sigma_approx=None,
                 order="deterministic", tune=True, target=0.45, window=None, x0_approx=None):
        x0_approx = x0 if x0_approx is None else x0_approx
        sa = sigma_fine if sigma_approx is None else sigma_approx
        super().__init__(fine, [ChainState(x0, rngs[0]), ChainState(x0_approx, rngs[1])],
                         {"sigma_fine": sigma_fine, "sigma_approx": sa},
                         {"sigma_fine": 0, "sigma_approx": 1} if tune else None, target, window or fine.dim)
        self.approx = approx
        self.r = int(r)
        self.order = order

    def initialize(self):
        self.chains[0].evaluation(self.posterior)
        self.chains[1].evaluation(self.approx)

    def step(self):
        metropolis_coupled_step(self.chains[0], self.chains[1], self.posterior, self.approx, self.r,
                                self.params["sigma_fine"], self.params["sigma_approx"], self.order)


# -- run -----------------------------------------------------------------------


@dataclass
class RunSettings:
    budget: float
    burn_in: float = 0.0
    thin: int = 10
    tracked: np.ndarray | None = None
    record: str = "field"
    weights: CostWeights = CostWeights()
    trace_path: str | os.PathLike | None = None
    checkpoint_path: str | os.PathLike | None = None
    checkpoint_records: int = 100
    resume: bool = False


def _field_of(driver: Driver, record: str, x: np.ndarray) -> np.ndarray:
    if record == "field":
        return np.asarray(driver.posterior.prior.to_field(x))
    if record == "parameter":
        return x
    raise ConfigurationError(f"record must be 'field' or 'parameter', got {record!r}")


def run(driver: Driver, settings: RunSettings) -> Trace:
    """Advance ``driver`` until its effort reaches ``settings.budget * m``.

    Burn-in (tuning on) lasts until effort reaches ``burn_in * m``; then
    tuners freeze, tallies reset and the current state becomes record 0.
    Later records are taken each time effort crosses another
    ``thin * m``; with one sweep costing m this is every ``thin`` sweeps.
    """
    s = settings
    if s.budget < 0 or s.burn_in < 0:
        raise ConfigurationError("budget and burn-in must be non-negative")
    if s.thin < 1:
        raise ConfigurationError("thin must be >= 1")
    m = driver.dim
    w = s.weights
    ckpt = Path(s.checkpoint_path) if s.checkpoint_path else None
    trace: Trace | None = None
    loop = {"phase": "burn_in", "next": None}

    if s.resume and ckpt is not None and ckpt.exists():
        d = json.loads(ckpt.read_text())
        driver.load_dict(d["driver"], ckpt)
        loop = d["loop"]
        if loop["phase"] == "sample":
            if s.trace_path is None or not Path(s.trace_path).exists():
                raise ConfigurationError(f"cannot resume: trace file {s.trace_path} is missing")
            trace = Trace.load(s.trace_path)
            del trace.counts[d["records"]:], trace.rates[d["records"]:], trace.states[d["records"]:]
    else:
        driver.initialize()

    def save():
        if s.trace_path is not None and trace is not None:
            trace.save(s.trace_path)
        if ckpt is not None:
            payload = {"driver": driver.to_dict(ckpt), "loop": loop,
                       "records": 0 if trace is None else len(trace)}
            atomic_write_text(ckpt, json.dumps(payload))

    limit = s.budget * m
    if loop["phase"] == "burn_in":
        while driver.effort(w) < min(s.burn_in * m, limit):
            driver.step()
            driver.tune()
        driver.end_burn_in()
        loop["phase"] = "sample"
        x0 = _field_of(driver, s.record, driver.chain.x)
        cols = np.arange(x0.size) if s.tracked is None else np.asarray(s.tracked)
        trace = Trace(cols)
        trace.append(x0, driver.counters(), driver.rates())
        loop["next"] = driver.effort(w) + s.thin * m

    since = 0
    while driver.effort(w) < limit:
        driver.step()
        e = driver.effort(w)
        if e >= loop["next"]:
            trace.append(_field_of(driver, s.record, driver.chain.x), driver.counters(), driver.rates())
            while loop["next"] <= e:
                loop["next"] += s.thin * m
            since += 1
            if since >= s.checkpoint_records:
                save()
                since = 0
    save()
    return trace

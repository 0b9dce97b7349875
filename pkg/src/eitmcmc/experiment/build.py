"""Turn a ``RunConfig`` into posteriors, an initial state and a driver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..field_grid import GridSpec, load_field
from ..forward_solver import ApproxModel, CoarseModel, FineModel, load_voltages
from ..posterior import NoiseModel, Posterior
from ..priors import ConvolutionPrior, GmrfPrior, TricubePrior, knot_lattice
from ..samplers.runner import (AMSDADriver, CoupledDriver, DADriver, Driver, MSDADriver, RunSettings, RwmDriver,
                               SingleSiteDriver, chain_rngs)
from ..samplers.state import CostWeights
from ..samplers.trace import Trace
from .config import ConfigError, RunConfig
from .data import default_tracked, generate_data, truth_image
from .toy import ToyPosterior

# Starting conductivity for MRF priors: the midpoint of the support.
X0_LEVEL = 3.5
DEFAULT_TARGETS = {"single_site": 0.45, "rwm": 0.3, "coupled": 0.45, "da": 1.0 / 3.0, "msda": 0.45, "amsda": 0.45}


@dataclass
class Problem:
    fine: Posterior
    approx: Posterior
    coarse: Posterior
    x0: np.ndarray
    tracked: np.ndarray | None
    y: np.ndarray
    sigma: float


def make_prior(cfg: RunConfig, grid: GridSpec):
    p = cfg.prior
    if p.kind == "tricube":
        return TricubePrior(beta=p.beta, s=p.s)
    if p.kind == "gmrf":
        return GmrfPrior(beta=p.beta)
    return ConvolutionPrior(grid, knot_lattice(p.knots), kernel_sd=p.kernel_sd, sigma_u=p.sigma_u)


def build_problem(cfg: RunConfig) -> Problem:
    if cfg.problem.kind == "toy":
        toy = ToyPosterior(q=cfg.toy.q, sigma=cfg.toy.sigma, prior=make_prior(cfg, GridSpec(2)),
                           approx_iters=cfg.grid.approx_iters)
        return Problem(toy.posterior("fine"), toy.posterior("approx"), toy.posterior("coarse"),
                       np.full(4, 3.0), None, toy.y, toy.sigma)
    g = cfg.grid
    grid = GridSpec(g.fine_side)
    if cfg.data.data:
        y = load_voltages(cfg.data.data).flat
        sigma = cfg.data.sigma
    else:
        truth = load_field(cfg.data.truth) if cfg.data.truth else truth_image(g.fine_side)
        if truth.grid.side != g.fine_side:
            raise ConfigError(f"truth image is {truth.grid.side}x{truth.grid.side}, fine grid is {g.fine_side}")
        y, sigma = generate_data(truth, cfg.data.snr_ratio, cfg.data.data_seed,
                                 sigma=cfg.data.sigma if cfg.data.sigma > 0 else None)
        if sigma <= 0:
            raise ConfigError("noise sd resolved to 0; set [data] sigma or snr_ratio > 0")
    noise = NoiseModel(sigma, y.size)
    prior = make_prior(cfg, grid)
    fine = Posterior(y, noise, prior, FineModel(grid))
    approx = Posterior(y, noise, prior, ApproxModel(grid, g.approx_iters))
    coarse = Posterior(y, noise, prior, CoarseModel(grid, GridSpec(g.coarse_side), g.coarse_mean))
    x0 = np.zeros(prior.p) if isinstance(prior, ConvolutionPrior) else np.full(grid.m, X0_LEVEL)
    tracked = np.asarray(cfg.tracked) if cfg.tracked else default_tracked(g.fine_side)
    return Problem(fine, approx, coarse, x0, tracked, y, sigma)


def rwm_covariance(cfg: RunConfig, m: int) -> np.ndarray:
    kind = cfg.kernel.rwm_covariance
    if kind == "identity":
        return np.eye(m)
    t = Trace.load(cfg.kernel.rwm_trace)
    if len(t.columns) != m:
        raise ConfigError(f"{cfg.kernel.rwm_trace}: records {len(t.columns)} components, need all {m}")
    V = t.values
    if kind == "diagonal":
        return np.diag(V.var(axis=0))
    return np.cov(V, rowvar=False, bias=True)


def build_driver(cfg: RunConfig, prob: Problem) -> Driver:
    k = cfg.kernel
    rngs = chain_rngs(cfg.run.seed, 2)
    target = k.target or DEFAULT_TARGETS[k.kind]
    window = k.window or None
    surrogate = prob.approx if k.surrogate == "approx" else prob.coarse
    if k.kind == "single_site":
        return SingleSiteDriver(prob.fine, prob.x0, rngs[0], k.sigma_z, k.order, k.tune, target, window)
    if k.kind == "rwm":
        m = prob.fine.dim
        return RwmDriver(prob.fine, prob.x0, rngs[0], rwm_covariance(cfg, m), k.alpha or None, k.tune, target,
                         window or 100)
    if k.kind == "da":
        return DADriver(prob.fine, surrogate, prob.x0, rngs[0], k.sigma_z, k.order, k.tune, target, window)
    if k.kind == "msda":
        return MSDADriver(prob.fine, surrogate, prob.x0, rngs[0], k.n_step, k.sigma_z, k.tune, target, window)
    if k.kind == "amsda":
        return AMSDADriver(prob.fine, prob.coarse, prob.x0, rngs[0], k.n_step, k.sigma_z, k.bias_rule,
                           k.bias_update, k.refresh_every, k.tune, target, window)
    return CoupledDriver(prob.fine, surrogate, prob.x0, rngs, k.coupling_ratio, k.sigma_z, None, k.order,
                         k.tune, target, window)


def build_settings(cfg: RunConfig, prob: Problem, trace_path=None, checkpoint_path=None,
                   resume: bool = False) -> RunSettings:
    c = cfg.cost
    record = "parameter" if cfg.problem.kind == "toy" else cfg.run.record
    tracked = prob.tracked if cfg.run.pixels == "tracked" else None
    return RunSettings(budget=cfg.run.budget, burn_in=cfg.run.burn_in, thin=cfg.run.thin,
                       tracked=tracked, record=record, weights=CostWeights(c.fine, c.approx, c.coarse),
                       trace_path=trace_path, checkpoint_path=checkpoint_path,
                       checkpoint_records=cfg.run.checkpoint_records, resume=resume)

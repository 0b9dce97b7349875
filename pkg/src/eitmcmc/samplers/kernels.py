"""Metropolis kernels: single-site, random-walk, delayed acceptance
(single-site and multiple-step), adaptive multiple-step, and two-chain
Metropolis coupling.

Every kernel mutates and returns the ``ChainState`` it is given.  Random
draws happen in a fixed order per proposal (site, increment, uniform), and
proposals outside the prior support are rejected before any solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigh

from ..posterior import AdaptiveCoarsePosterior, BiasState, Evaluation, Posterior, update_bias
from .state import ChainState, ConfigurationError, accept

ORDERS = ("deterministic", "random")


def _sites(state: ChainState, m: int, order: str):
    if order == "deterministic":
        yield from range(m)
    elif order == "random":
        for _ in range(m):
            yield int(state.rng.integers(m))
    else:
        raise ConfigurationError(f"unknown site order {order!r}; expected one of {ORDERS}")


def single_site_sweep(state: ChainState, posterior: Posterior, sigma_z: float,
                      order: str = "deterministic") -> ChainState:
    """m single-site Metropolis updates with N(0, sigma_z^2) increments."""
    if not sigma_z > 0:
        raise ConfigurationError("sigma_z must be positive")
    rng = state.rng
    tally = state.tallies["stage1"]
    cur = state.evaluation(posterior)
    key = posterior.cache_key
    for i in _sites(state, posterior.dim, order):
        value = state.x[i] + sigma_z * rng.standard_normal()
        prop = posterior.evaluate_site(state.x, i, value, cur)
        state.charge(prop.receipt)
        ok = accept(rng, prop.logp - cur.logp)
        tally(ok)
        if ok:
            x = state.x.copy()
            x[i] = value
            state.move(x, {key: prop})
            cur = prop
    return state


class RwmProposal:
    """Multivariate normal increment N(0, alpha * Sigma_z).

    The factor is a Cholesky factor when Sigma_z is positive definite and a
    symmetric square root when it is only semi-definite."""

    def __init__(self, Sigma_z: np.ndarray, alpha: float = 1.0):
        S = np.atleast_2d(np.asarray(Sigma_z, dtype=float))
        if S.shape[0] != S.shape[1]:
            raise ConfigurationError("proposal covariance must be square")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ConfigurationError("proposal covariance is not symmetric")
        if not alpha > 0:
            raise ConfigurationError("proposal scale alpha must be positive")
        try:
            F = cholesky(S, lower=True, check_finite=True)
        except np.linalg.LinAlgError:
            w, V = eigh(S)
            if w.min() < -1e-10 * max(1.0, w.max()):
                raise ConfigurationError(f"proposal covariance is not PSD (min eigenvalue {w.min():.3g})") from None
            F = V * np.sqrt(np.clip(w, 0.0, None))
        self.Sigma_z = S
        self.factor = F
        self.alpha = float(alpha)

    @classmethod
    def identity(cls, m: int, alpha: float = 1.0) -> "RwmProposal":
        return cls(np.eye(m), alpha)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(self.alpha) * (self.factor @ rng.standard_normal(self.factor.shape[1]))


def rwm_step(state: ChainState, posterior: Posterior, proposal: RwmProposal) -> ChainState:
    """One random-walk Metropolis update of all components at once."""
    cur = state.evaluation(posterior)
    x_new = state.x + proposal.draw(state.rng)
    prop = posterior.evaluate(x_new)
    state.charge(prop.receipt)
    ok = accept(state.rng, prop.logp - cur.logp)
    state.tallies["stage1"](ok)
    if ok:
        state.move(x_new, {posterior.cache_key: prop})
    return state


def da_sweep(state: ChainState, fine: Posterior, surrogate: Posterior, sigma_z: float,
             order: str = "deterministic") -> ChainState:
    """m single-site delayed-acceptance updates.

    Stage one screens each proposal with the surrogate; only survivors pay
    for a fine solve, and stage two corrects with the ratio that restores
    detailed balance with the fine posterior."""
    if not sigma_z > 0:
        raise ConfigurationError("sigma_z must be positive")
    rng = state.rng
    t1, t2 = state.tallies["stage1"], state.tallies["stage2"]
    f_cur = state.evaluation(fine)
    s_cur = state.evaluation(surrogate)
    for i in _sites(state, fine.dim, order):
        value = state.x[i] + sigma_z * rng.standard_normal()
        s_prop = surrogate.evaluate_site(state.x, i, value, s_cur)
        state.charge(s_prop.receipt)
        ok1 = accept(rng, s_prop.logp - s_cur.logp)
        t1(ok1)
        if not ok1:
            continue
        f_prop = fine.evaluate_site(state.x, i, value, f_cur)
        state.charge(f_prop.receipt)
        ok2 = accept(rng, (f_prop.logp - f_cur.logp) - (s_prop.logp - s_cur.logp))
        t2(ok2)
        if ok2:
            x = state.x.copy()
            x[i] = value
            state.move(x, {surrogate.cache_key: s_prop, fine.cache_key: f_prop})
            f_cur, s_cur = f_prop, s_prop
    return state


def _surrogate_walk(state: ChainState, surrogate: Posterior, s_cur: Evaluation, n_step: int,
                    sigma_z: float) -> tuple[np.ndarray, Evaluation]:
    """n_step random-site Metropolis updates on the surrogate, starting at state.x."""
    rng = state.rng
    t1 = state.tallies["stage1"]
    m = surrogate.dim
    y = state.x
    e = s_cur
    for _ in range(n_step):
        i = int(rng.integers(m))
        value = y[i] + sigma_z * rng.standard_normal()
        prop = surrogate.evaluate_site(y, i, value, e)
        state.charge(prop.receipt)
        ok = accept(rng, prop.logp - e.logp)
        t1(ok)
        if ok:
            y = y.copy()
            y[i] = value
            e = prop
    return y, e


def msda_step(state: ChainState, fine: Posterior, surrogate: Posterior, n_step: int = 100,
              sigma_z: float = 0.3) -> ChainState:
    """One multiple-step delayed-acceptance update.

    A surrogate chain of ``n_step`` random-site updates proposes x'; the
    fine level accepts it with the ratio pi(x') pi_s(x) / (pi(x) pi_s(x')).
    If the surrogate chain never moved there is nothing to test and no
    fine solve is spent."""
    if n_step < 1:
        raise ConfigurationError("n_step must be >= 1")
    if not sigma_z > 0:
        raise ConfigurationError("sigma_z must be positive")
    f_cur = state.evaluation(fine)
    s_cur = state.evaluation(surrogate)
    y, s_prop = _surrogate_walk(state, surrogate, s_cur, n_step, sigma_z)
    if y is state.x:
        return state
    f_prop = fine.evaluate(y)
    state.charge(f_prop.receipt)
    ok = accept(state.rng, (f_prop.logp - f_cur.logp) - (s_prop.logp - s_cur.logp))
    state.tallies["stage2"](ok)
    if ok:
        state.move(y, {surrogate.cache_key: s_prop, fine.cache_key: f_prop})
    return state


def _coarse_eta(state: ChainState, surrogate: AdaptiveCoarsePosterior) -> Evaluation:
    e = state.cache.get(surrogate.cache_key)
    if e is None:
        return state.evaluation(surrogate)
    return surrogate.reweight(e)


def amsda_step(state: ChainState, fine: Posterior, surrogate: AdaptiveCoarsePosterior, bias: BiasState,
               n_step: int = 100, sigma_z: float = 0.3, rule: str = "welford",
               update: str = "every_step") -> tuple[ChainState, BiasState]:
    """Multiple-step delayed acceptance with the bias-corrected coarse surrogate.

    ``surrogate`` carries the frozen bias snapshot used for this whole step;
    ``bias`` is the running state, which may be newer when the snapshot is
    refreshed on a schedule.  After the accept/reject the residual
    eta(x) - eta_c(x) at the resulting state is folded into ``bias``:
    every step (``update="every_step"``) or only when a fine solve ran
    during the step (``update="on_fine_eval"``).
    """
    if n_step < 1:
        raise ConfigurationError("n_step must be >= 1")
    f_cur = state.evaluation(fine)
    s_cur = _coarse_eta(state, surrogate)
    state.cache[surrogate.cache_key] = s_cur
    y, s_prop = _surrogate_walk(state, surrogate, s_cur, n_step, sigma_z)
    ran_fine = y is not state.x
    if ran_fine:
        f_prop = fine.evaluate(y)
        state.charge(f_prop.receipt)
        ok = accept(state.rng, (f_prop.logp - f_cur.logp) - (s_prop.logp - s_cur.logp))
        state.tallies["stage2"](ok)
        if ok:
            state.move(y, {surrogate.cache_key: s_prop, fine.cache_key: f_prop})
    if ran_fine or update == "every_step":
        residual = state.cache[fine.cache_key].eta - state.cache[surrogate.cache_key].eta
        bias = update_bias(bias, residual, rule)
    elif update != "on_fine_eval":
        raise ConfigurationError(f"unknown bias update policy {update!r}")
    return state, bias


def initial_bias(state: ChainState, fine: Posterior, coarse: Posterior) -> BiasState:
    """b = eta(x0) - eta_c(x0), Sigma_b = 0, with k = 1."""
    f = state.evaluation(fine)
    e = coarse.evaluate(state.x)
    state.charge(e.receipt)
    if f.eta is None or e.eta is None:
        raise ConfigurationError("initial state lies outside the prior support")
    bias = BiasState.initial(f.eta - e.eta)
    state.cache[AdaptiveCoarsePosterior.fidelity_label] = e
    return bias


@dataclass
class SwapOutcome:
    proposed: bool
    accepted: bool
    log_ratio: float


def metropolis_coupled_step(fine_state: ChainState, approx_state: ChainState, fine: Posterior,
                            approx: Posterior, r: int = 3, sigma_fine: float = 0.5,
                            sigma_approx: float | None = None,
                            order: str = "deterministic") -> tuple[ChainState, ChainState, SwapOutcome]:
    """r sweeps on the surrogate chain, one on the fine chain, then a state swap.

    The swap is accepted with probability
    min{1, pi(x~) pi_a(x) / (pi(x) pi_a(x~))}, which keeps the product
    posterior invariant.  The uniform is drawn from the fine chain's stream.
    """
    if r < 1:
        raise ConfigurationError("coupling ratio r must be >= 1")
    sigma_approx = sigma_fine if sigma_approx is None else sigma_approx
    for _ in range(r):
        single_site_sweep(approx_state, approx, sigma_approx, order)
    single_site_sweep(fine_state, fine, sigma_fine, order)

    x, xt = fine_state.x, approx_state.x
    if np.array_equal(x, xt):
        fine_state.tallies["stage2"](True)
        return fine_state, approx_state, SwapOutcome(True, True, 0.0)
    f_x = fine_state.evaluation(fine)
    a_xt = approx_state.evaluation(approx)
    f_xt = fine.evaluate(xt)
    fine_state.charge(f_xt.receipt)
    a_x = approx.evaluate(x)
    approx_state.charge(a_x.receipt)
    lr = (f_xt.logp + a_x.logp) - (f_x.logp + a_xt.logp)
    ok = accept(fine_state.rng, lr)
    fine_state.tallies["stage2"](ok)
    if ok:
        fine_state.move(xt, {fine.cache_key: f_xt})
        approx_state.move(x, {approx.cache_key: a_x})
    return fine_state, approx_state, SwapOutcome(True, ok, float(lr))

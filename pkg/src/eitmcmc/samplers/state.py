"""Per-chain state: position, cached densities, solver counters, tallies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..posterior import Evaluation, Posterior, Receipt


class ConfigurationError(ValueError):
    """Invalid sampler settings, detected before any solve."""


@dataclass(frozen=True)
class CostWeights:
    """Price of one solve in units of one fine solve.

    Defaults: the truncated iterative solve is priced at a third of a fine
    solve and the coarse-grid solve at a hundredth.
    """

    fine: float = 1.0
    approx: float = 1.0 / 3.0
    coarse: float = 0.01


@dataclass
class Counters:
    fine: int = 0
    approx: int = 0
    coarse: int = 0

    def add(self, r: Receipt) -> None:
        self.fine += r.fine
        self.approx += r.approx
        self.coarse += r.coarse

    def effort(self, w: CostWeights) -> float:
        return w.fine * self.fine + w.approx * self.approx + w.coarse * self.coarse

    def as_receipt(self) -> Receipt:
        return Receipt(self.fine, self.approx, self.coarse)


@dataclass
class Tally:
    accepted: int = 0
    proposed: int = 0

    def __call__(self, ok: bool) -> None:
        self.proposed += 1
        self.accepted += bool(ok)

    @property
    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


STAGES = ("stage1", "stage2")


@dataclass
class ChainState:
    """Mutable state owned by exactly one chain.

    ``cache`` maps a posterior's ``cache_key`` to its evaluation at ``x``;
    moving ``x`` replaces the cache wholesale.
    """

    x: np.ndarray
    rng: np.random.Generator
    counters: Counters = field(default_factory=Counters)
    cache: dict[str, Evaluation] = field(default_factory=dict)
    tallies: dict[str, Tally] = field(default_factory=lambda: {s: Tally() for s in STAGES})

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)

    def charge(self, r: Receipt) -> None:
        self.counters.add(r)

    def evaluation(self, post: Posterior) -> Evaluation:
        e = self.cache.get(post.cache_key)
        if e is None:
            e = post.evaluate(self.x)
            self.charge(e.receipt)
            self.cache[post.cache_key] = e
        return e

    def move(self, x_new: np.ndarray, evals: dict[str, Evaluation]) -> None:
        self.x = x_new
        self.cache = dict(evals)

    def reset_tallies(self) -> None:
        self.tallies = {s: Tally() for s in STAGES}


def accept(rng: np.random.Generator, log_ratio: float) -> bool:
    """Metropolis test.  A uniform is drawn only when the ratio is below one
    and finite, so kernels that see identical ratios consume identical
    random streams."""
    if log_ratio >= 0.0:
        return True
    if not np.isfinite(log_ratio):
        return False
    return bool(np.log(rng.random()) < log_ratio)

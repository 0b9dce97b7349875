"""Enumerable toy posterior: the correctness oracle for every kernel.

The parameter is a 2x2 image whose pixels take one of ``q`` levels.  So
that the continuous-increment samplers run unmodified, the parameter space
is the box [2.5, 4.5]^4 with a density that is constant on each cell of a
q-level quantisation: every pixel value is snapped to the nearest level
before the prior and forward model see it.  Each cell has the same volume,
so the cell probabilities of this density are exactly the enumerated
table.

The 2x2 image drives a 4x4 fine grid (each pixel a 2x2 block of cells);
the coarse model solves directly on 2x2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..field_grid import GRAY_BOUNDS, GridSpec, refine_values
from ..forward_solver import ApproxModel, CoarseModel, FineModel
from ..posterior import NoiseModel, Posterior
from ..priors import TricubePrior

MAX_STATES = 10_000
TOY_SIDE = 2
TOY_FINE_SIDE = 4


class StateSpaceTooLarge(ValueError):
    pass


def levels(q: int, bounds: tuple[float, float] = GRAY_BOUNDS) -> np.ndarray:
    """Cell midpoints of q equal bins of ``bounds``; q=2 gives {3, 4}."""
    lo, hi = bounds
    return lo + (np.arange(q) + 0.5) * (hi - lo) / q


def quantize_index(theta: np.ndarray, q: int, bounds: tuple[float, float] = GRAY_BOUNDS) -> np.ndarray:
    lo, hi = bounds
    j = ((np.asarray(theta, dtype=float) - lo) * (q / (hi - lo))).astype(np.int64)
    return np.minimum(np.maximum(j, 0), q - 1)


@dataclass(frozen=True, eq=False)
class QuantizedPrior:
    """An MRF prior evaluated on the quantised 2x2 image."""

    base: TricubePrior
    q: int = 2
    factor: int = TOY_FINE_SIDE // TOY_SIDE
    local = True

    def __post_init__(self):
        object.__setattr__(self, "levels", levels(self.q, self.base.bounds))
        blocks = refine_values(np.arange(TOY_SIDE * TOY_SIDE), TOY_SIDE, self.factor).astype(np.int64)
        object.__setattr__(self, "_blocks", blocks)

    @property
    def bounds(self):
        return self.base.bounds

    def _index(self, v: float) -> int:
        lo, hi = self.bounds
        return min(max(int((v - lo) * self.q / (hi - lo)), 0), self.q - 1)

    def quantize(self, theta: np.ndarray) -> np.ndarray:
        return self.levels[quantize_index(theta, self.q, self.bounds)]

    def dim(self, grid: GridSpec | None = None) -> int:
        return TOY_SIDE * TOY_SIDE

    def to_field(self, theta: np.ndarray) -> np.ndarray:
        return self.quantize(theta)[self._blocks]

    def in_support(self, theta: np.ndarray) -> bool:
        return self.base.in_support(theta)

    def log_prior(self, theta: np.ndarray, side: int | None = None) -> float:
        if not self.in_support(theta):
            return -np.inf
        return self.base.log_prior(self.quantize(theta), TOY_SIDE)

    def site_log_ratio(self, theta, i, xi_new, neighbours) -> float:
        lo, hi = self.bounds
        if not lo <= xi_new <= hi:
            return -np.inf
        lv = self.levels
        qx = [lv[self._index(v)] for v in theta]
        return self.base.site_log_ratio(qx, i, lv[self._index(xi_new)], neighbours)


class MemoModel:
    """Caches a forward model by its input bytes.  ``calls`` still counts
    every request so cost accounting is unaffected."""

    def __init__(self, model):
        self.model = model
        self.fidelity = model.fidelity
        self.grid = model.grid
        self.calls = 0
        self._memo: dict[bytes, np.ndarray] = {}

    def __call__(self, values: np.ndarray) -> np.ndarray:
        self.calls += 1
        key = np.ascontiguousarray(values, dtype=float).tobytes()
        out = self._memo.get(key)
        if out is None:
            out = self.model(values)
            out.setflags(write=False)
            self._memo[key] = out
        return out


@dataclass(eq=False)
class ToyPosterior:
    """Toy problem at every fidelity, sharing one prior and one data vector.

    ``sigma`` is the noise sd; ``truth`` the 2x2 image that generates
    noiseless data ``y = eta(truth)`` unless ``y`` is supplied.
    """

    q: int = 2
    sigma: float = 0.05
    truth: tuple[float, ...] = (3.0, 4.0, 4.0, 3.0)
    prior: TricubePrior = field(default_factory=TricubePrior)
    approx_iters: int = 3
    y: np.ndarray | None = None

    def __post_init__(self):
        self.qprior = QuantizedPrior(self.prior, self.q)
        fine_grid = GridSpec(TOY_FINE_SIDE)
        self.models = {
            "fine": MemoModel(FineModel(fine_grid)),
            "approx": MemoModel(ApproxModel(fine_grid, self.approx_iters)),
            "coarse": MemoModel(CoarseModel(fine_grid, GridSpec(TOY_SIDE))),
        }
        if self.y is None:
            self.y = self.models["fine"].model(self.qprior.to_field(np.asarray(self.truth, dtype=float)))
        self.noise = NoiseModel(self.sigma, len(self.y))

    @property
    def n_states(self) -> int:
        return self.q ** (TOY_SIDE * TOY_SIDE)

    def posterior(self, fidelity: str = "fine") -> Posterior:
        return Posterior(self.y, self.noise, self.qprior, self.models[fidelity])

    def states(self) -> np.ndarray:
        """All level vectors in lexicographic index order."""
        lv = self.qprior.levels
        return np.array([[lv[j] for j in idx] for idx in itertools.product(range(self.q), repeat=4)])

    def state_index(self, theta: np.ndarray) -> np.ndarray:
        """Lexicographic index of the quantised state(s); accepts (4,) or (N, 4)."""
        j = quantize_index(np.atleast_2d(theta), self.q, self.qprior.bounds)
        return j @ (self.q ** np.arange(3, -1, -1))


def enumerate_posterior(toy: ToyPosterior, fidelity: str = "fine", reverse: bool = False) -> np.ndarray:
    """Exact normalised posterior over all q^4 states, in lexicographic order.

    Uses the same ``Posterior.evaluate`` entry point as the samplers.  With
    ``reverse`` the states are visited and summed in the opposite order.
    """
    if toy.n_states > MAX_STATES:
        raise StateSpaceTooLarge(f"{toy.n_states} states exceeds the enumeration limit {MAX_STATES}")
    post = toy.posterior(fidelity)
    S = toy.states()
    order = np.arange(len(S))[::-1] if reverse else np.arange(len(S))
    logp = np.empty(len(S))
    for k in order:
        logp[k] = post.evaluate(S[k]).logp
    w = np.exp(logp - logp.max())
    total = 0.0
    for k in order:
        total += w[k]
    return w / total


def empirical_distribution(toy: ToyPosterior, samples: np.ndarray) -> np.ndarray:
    idx = toy.state_index(np.asarray(samples))
    return np.bincount(idx, minlength=toy.n_states) / len(idx)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())

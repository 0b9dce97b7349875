"""Gaussian likelihoods and log-posteriors at every fidelity, plus the
running bias state used to correct the coarse model.

All log-densities drop x-independent constants, so values are comparable
only within one fidelity.  The adaptive coarse likelihood keeps the
``-1/2 logdet(I + Sigma_b / sigma^2)`` term because ``Sigma_b`` moves between
adaptation steps.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.linalg.lapack import dtrtri

from .field_grid import DimensionError, atomic_write_text
from .priors import neighbour_table

FIDELITIES = ("fine", "approx", "coarse")


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic observation noise, Sigma_e = sigma^2 I_n."""

    sigma: float
    n: int = 256

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"noise sd must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Receipt:
    """Which solvers a posterior evaluation ran."""

    fine: int = 0
    approx: int = 0
    coarse: int = 0

    def __add__(self, other: "Receipt") -> "Receipt":
        return Receipt(self.fine + other.fine, self.approx + other.approx, self.coarse + other.coarse)

    @classmethod
    def one(cls, fidelity: str) -> "Receipt":
        return cls(**{fidelity: 1})


NO_SOLVE = Receipt()


@dataclass(frozen=True, eq=False)
class Evaluation:
    log_prior: float
    log_lik: float
    eta: np.ndarray | None = field(default=None, repr=False)
    receipt: Receipt = NO_SOLVE

    @property
    def logp(self) -> float:
        return self.log_prior + self.log_lik


def log_likelihood(y: np.ndarray, eta_x: np.ndarray, noise: NoiseModel) -> float:
    """-(1/2 sigma^2) ||y - eta(x)||^2."""
    if len(y) != len(eta_x):
        raise DimensionError(f"data length {len(y)} != model output length {len(eta_x)}")
    r = np.asarray(y, dtype=float) - eta_x
    return float(-0.5 * np.dot(r, r) / noise.sigma**2)


# -- bias state --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiasState:
    """Running mean ``b`` and covariance ``Sigma_b`` of eta(x) - eta_c(x) over
    ``k`` residuals."""

    k: int
    b: np.ndarray
    Sigma_b: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, n: int = 256) -> "BiasState":
        return cls(0, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def initial(cls, residual: np.ndarray) -> "BiasState":
        """b = residual, Sigma_b = 0: the state after one observed residual."""
        return update_bias(cls.empty(len(residual)), residual)

    @property
    def n(self) -> int:
        return len(self.b)


def update_bias(bias: BiasState, residual: np.ndarray, rule: str = "welford") -> BiasState:
    """Fold one residual eta(x) - eta_c(x) into the running bias statistics.

    ``rule="welford"`` keeps ``Sigma_b`` equal to the population covariance
    of all residuals seen so far.  ``rule="literal"`` applies
    ``Sigma' = ((k'-1) Sigma + (r - b')(r - b')^T) / k'``, which tracks the
    same mean but under-weights the spread.
    """
    r = np.asarray(residual, dtype=float)
    if r.shape != bias.b.shape:
        raise DimensionError(f"residual length {r.size} != bias length {bias.n}")
    k = bias.k + 1
    d_old = r - bias.b
    b = bias.b + d_old / k
    d_new = r - b
    if rule == "welford":
        S = ((k - 1) * bias.Sigma_b + np.outer(d_old, d_new)) / k
        S = 0.5 * (S + S.T)
    elif rule == "literal":
        S = ((k - 1) * bias.Sigma_b + np.outer(d_new, d_new)) / k
    else:
        raise ValueError(f"unknown bias update rule {rule!r}")
    return BiasState(k, b, S)


def save_bias(bias: BiasState, path: str | os.PathLike) -> None:
    fmt = lambda row: " ".join(repr(float(v)) for v in row)  # noqa: E731
    lines = [str(bias.k), fmt(bias.b)] + [fmt(row) for row in bias.Sigma_b]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_bias(path: str | os.PathLike) -> BiasState:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated bias checkpoint")
    k = int(lines[0])
    b = np.array([float(t) for t in lines[1].split()])
    n = b.size
    if len(lines) != 2 + n:
        raise ValueError(f"{path}: expected {n} covariance rows, found {len(lines) - 2}")
    S = np.array([[float(t) for t in ln.split()] for ln in lines[2:]])
    if S.shape != (n, n):
        raise ValueError(f"{path}: covariance block is not {n}x{n}")
    return BiasState(k, b, S)


class _AdaptiveFactor:
    """Cholesky data for (sigma^2 I + Sigma_b): whitener and log-det term."""

    def __init__(self, noise: NoiseModel, bias: BiasState):
        n = bias.n
        C = bias.Sigma_b + noise.sigma**2 * np.eye(n)
        try:
            L = cholesky(C, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError("sigma^2 I + Sigma_b is not positive definite") from exc
        self.L = L
        self.half_logdet = float(np.sum(np.log(np.diag(L))) - n * np.log(noise.sigma))
        W, info = dtrtri(L, lower=1)
        if info:
            raise ArithmeticError("triangular inverse failed")
        self.W = np.tril(W)


def log_likelihood_adaptive(y: np.ndarray, eta_c_x: np.ndarray, noise: NoiseModel, bias: BiasState) -> float:
    """-1/2 r^T (sigma^2 I + Sigma_b)^-1 r - 1/2 logdet(I + Sigma_b/sigma^2),
    with r = y - eta_c(x) - b."""
    if len(y) != len(eta_c_x) or len(y) != bias.n:
        raise DimensionError("data, model output and bias state lengths differ")
    f = _AdaptiveFactor(noise, bias)
    z = solve_triangular(f.L, np.asarray(y, dtype=float) - eta_c_x - bias.b, lower=True, check_finite=False)
    return float(-0.5 * np.dot(z, z) - f.half_logdet)


# -- posteriors --------------------------------------------------------------


class Posterior:
    """pi(theta | y) for one forward model.

    ``prior`` decides the parameter space: for MRF priors theta is the
    conductivity image itself; for the convolution prior it is the latent
    vector and ``prior.to_field`` produces conductivities.
    """

    def __init__(self, y, noise: NoiseModel, prior, model, dim: int | None = None):
        self.y = np.asarray(y, dtype=float)
        if self.y.size != noise.n:
            raise DimensionError(f"data has {self.y.size} entries, noise model expects {noise.n}")
        self.noise = noise
        self.prior = prior
        self.model = model
        self.fidelity = model.fidelity
        self.cache_key = self.fidelity
        self.dim = dim if dim is not None else prior.dim(model.grid)
        self._local = getattr(prior, "local", False)
        if self._local:
            side = int(round(np.sqrt(self.dim)))
            self._nbrs = neighbour_table(side)
        self._receipt = Receipt.one(self.fidelity)

    def log_lik_from_eta(self, eta: np.ndarray) -> float:
        r = self.y - eta
        return -0.5 * float(np.dot(r, r)) / self.noise.sigma**2

    def evaluate(self, theta: np.ndarray) -> Evaluation:
        if not self.prior.in_support(theta):
            return Evaluation(-np.inf, -np.inf)
        lp = self.prior.log_prior(theta)
        eta = self.model(self.prior.to_field(theta))
        return Evaluation(lp, self.log_lik_from_eta(eta), eta, self._receipt)

    def evaluate_site(self, theta: np.ndarray, i: int, value: float, current: Evaluation) -> Evaluation:
        """Evaluate theta with component i replaced by ``value``.

        ``theta`` is left untouched; ``current`` must be the evaluation at theta."""
        if self._local:
            dlp = self.prior.site_log_ratio(theta, i, value, self._nbrs[i])
            if dlp == -np.inf:
                return Evaluation(-np.inf, -np.inf)
            prop = theta.copy()
            prop[i] = value
            eta = self.model(self.prior.to_field(prop))
            return Evaluation(current.log_prior + dlp, self.log_lik_from_eta(eta), eta, self._receipt)
        prop = theta.copy()
        prop[i] = value
        return self.evaluate(prop)

    def log_posterior(self, theta: np.ndarray) -> tuple[float, Receipt]:
        e = self.evaluate(theta)
        return e.logp, e.receipt


class AdaptiveCoarsePosterior(Posterior):
    """Coarse posterior with likelihood corrected by a frozen bias snapshot."""

    fidelity_label = "coarse_adaptive"

    def __init__(self, y, noise: NoiseModel, prior, model, bias: BiasState, dim: int | None = None):
        super().__init__(y, noise, prior, model, dim)
        self.cache_key = self.fidelity_label
        self.bias = bias
        f = _AdaptiveFactor(noise, bias)
        self._W = f.W
        self._w0 = f.W @ (self.y - bias.b)
        self._half_logdet = f.half_logdet

    def log_lik_from_eta(self, eta: np.ndarray) -> float:
        z = self._w0 - self._W @ eta
        return -0.5 * float(np.dot(z, z)) - self._half_logdet

    def with_bias(self, bias: BiasState) -> "AdaptiveCoarsePosterior":
        return AdaptiveCoarsePosterior(self.y, self.noise, self.prior, self.model, bias, self.dim)

    def reweight(self, e: Evaluation) -> Evaluation:
        """Re-score a cached evaluation under this bias state without a solve."""
        if e.eta is None:
            return e
        return Evaluation(e.log_prior, self.log_lik_from_eta(e.eta), e.eta, NO_SOLVE)


def log_posterior(posterior: Posterior, theta: np.ndarray) -> tuple[float, Receipt]:
    return posterior.log_posterior(theta)

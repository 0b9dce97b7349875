"""Image priors: tricube Markov random field, Gaussian MRF and process convolution.

MRF log-densities are ``beta * sum_{i~j} u(x_i - x_j)`` over horizontal and
vertical nearest neighbours, up to an additive constant, restricted to the
box ``[2.5, 4.5]^m``.  Larger ``u`` means more probable, so the tricube
kernel is a similarity bonus and the GMRF uses ``u(d) = -d**2``.

The process-convolution prior is parametrised by its latent vector; the
sampler state is ``u`` and ``to_field`` maps it to conductivities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .field_grid import GRAY_BOUNDS, DimensionError, GridSpec


class UnsupportedOperation(TypeError):
    pass


def tricube(d, s: float):
    """u(d) = (1/s)(1 - |d/s|^3)^3 on |d| < s, else 0."""
    a = np.abs(np.asarray(d, dtype=float)) / s
    return np.where(a < 1.0, (1.0 - a**3) ** 3 / s, 0.0)


def _tricube_scalar(d: float, s: float) -> float:
    a = abs(d) / s
    if a >= 1.0:
        return 0.0
    t = 1.0 - a * a * a
    return t * t * t / s


def neighbour_table(side: int) -> np.ndarray:
    """(m, 4) indices of the up/down/left/right neighbours, -1 where absent."""
    idx = np.arange(side * side).reshape(side, side)
    nb = np.full((side, side, 4), -1, dtype=np.int64)
    nb[1:, :, 0] = idx[:-1, :]
    nb[:-1, :, 1] = idx[1:, :]
    nb[:, 1:, 2] = idx[:, :-1]
    nb[:, :-1, 3] = idx[:, 1:]
    return nb.reshape(-1, 4)


class _MRFPrior:
    beta: float
    bounds: tuple[float, float]
    local = True

    def kernel(self, d):
        raise NotImplementedError

    def _kernel_scalar(self, d: float) -> float:
        raise NotImplementedError

    def dim(self, grid: GridSpec) -> int:
        return grid.m

    def to_field(self, theta: np.ndarray) -> np.ndarray:
        return theta

    def in_support(self, x: np.ndarray) -> bool:
        lo, hi = self.bounds
        return bool(np.all((x >= lo) & (x <= hi)))

    def log_prior(self, x: np.ndarray, side: int | None = None) -> float:
        x = np.asarray(x, dtype=float)
        if side is None:
            side = int(round(np.sqrt(x.size)))
        if side * side != x.size:
            raise DimensionError(f"{x.size} values do not form a square image")
        if not self.in_support(x):
            return -np.inf
        img = x.reshape(side, side)
        total = self.kernel(img[:, 1:] - img[:, :-1]).sum() + self.kernel(img[1:, :] - img[:-1, :]).sum()
        return float(self.beta * total)

    def site_log_ratio(self, x: np.ndarray, i: int, xi_new: float, neighbours: np.ndarray) -> float:
        """log pi(x') - log pi(x) when only site i changes, from its <= 4 edges.

        ``neighbours`` is a row of ``neighbour_table``.  ``x`` must be in support."""
        lo, hi = self.bounds
        if not lo <= xi_new <= hi:
            return -np.inf
        xi = x[i]
        if xi_new == xi:
            return 0.0
        acc = 0.0
        for j in neighbours:
            if j >= 0:
                xj = x[j]
                acc += self._kernel_scalar(xi_new - xj) - self._kernel_scalar(xi - xj)
        return self.beta * acc

    def sample(self, grid: GridSpec, rng: np.random.Generator, sweeps: int = 5000,
               proposal_sd: float = 0.5) -> np.ndarray:
        """Prior realisation by single-site Metropolis on the prior alone.

        Sites are visited in checkerboard order; the two colour classes are
        conditionally independent under a first-order MRF, so each half-sweep
        updates a whole class at once.  Starts from a uniform draw in the box."""
        lo, hi = self.bounds
        side = grid.side
        img = rng.uniform(lo, hi, size=(side, side))
        colour = (np.add.outer(np.arange(side), np.arange(side)) % 2).astype(bool)
        for _ in range(sweeps):
            for mask in (~colour, colour):
                prop = img + proposal_sd * rng.standard_normal(img.shape)
                delta = self._local_sum(img, prop) - self._local_sum(img, img)
                ok = (prop >= lo) & (prop <= hi)
                with np.errstate(invalid="ignore"):
                    accept = mask & ok & (np.log(rng.random(img.shape)) < self.beta * delta)
                img = np.where(accept, prop, img)
        return img.ravel()

    def _local_sum(self, img, centre):
        """Per-site sum of u(centre_i - img_j) over the neighbours j of i."""
        acc = np.zeros_like(img)
        acc[1:, :] += self.kernel(centre[1:, :] - img[:-1, :])
        acc[:-1, :] += self.kernel(centre[:-1, :] - img[1:, :])
        acc[:, 1:] += self.kernel(centre[:, 1:] - img[:, :-1])
        acc[:, :-1] += self.kernel(centre[:, :-1] - img[:, 1:])
        return acc


@dataclass(frozen=True)
class TricubePrior(_MRFPrior):
    beta: float = 0.5
    s: float = 0.3
    bounds: tuple[float, float] = GRAY_BOUNDS

    def __post_init__(self):
        if self.beta <= 0 or self.s <= 0:
            raise ValueError("tricube prior needs beta > 0 and s > 0")

    def kernel(self, d):
        return tricube(d, self.s)

    def _kernel_scalar(self, d: float) -> float:
        return _tricube_scalar(d, self.s)

    def site_log_ratio(self, x, i, xi_new, neighbours) -> float:
        # inlined kernel: this sits in every inner surrogate step
        lo, hi = self.bounds
        if not lo <= xi_new <= hi:
            return -np.inf
        xi = x[i]
        if xi_new == xi:
            return 0.0
        s = self.s
        acc = 0.0
        for j in neighbours:
            if j >= 0:
                xj = x[j]
                a = abs(xi_new - xj) / s
                if a < 1.0:
                    t = 1.0 - a * a * a
                    acc += t * t * t
                a = abs(xi - xj) / s
                if a < 1.0:
                    t = 1.0 - a * a * a
                    acc -= t * t * t
        return self.beta * acc / s


@dataclass(frozen=True)
class GmrfPrior(_MRFPrior):
    beta: float = 2.0
    bounds: tuple[float, float] = GRAY_BOUNDS

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("GMRF prior needs beta > 0")

    def kernel(self, d):
        return -np.square(d)

    def _kernel_scalar(self, d: float) -> float:
        return -d * d


def knot_lattice(n: int = 10) -> np.ndarray:
    t = (np.arange(n) + 0.5) / n
    kx, ky = np.meshgrid(t, t[::-1])
    return np.column_stack([kx.ravel(), ky.ravel()])


def gaussian_kernel(points: np.ndarray, knots: np.ndarray, sd: float) -> np.ndarray:
    """Radially symmetric bivariate normal density k(s - w), shape (len(points), len(knots))."""
    d2 = ((points[:, None, :] - knots[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-0.5 * d2 / sd**2) / (2.0 * np.pi * sd**2)


@dataclass(frozen=True, eq=False)
class ConvolutionPrior:
    """Process-convolution prior x(s) = sum_j u_j k(s - w_j), u_j ~ N(0, sigma_u^2).

    ``kernel_sd`` is the spread of the smoothing kernel and ``sigma_u`` the
    latent standard deviation.  ``to_field`` maps u to conductivities by the
    affine map ``offset + gain * x(s)``; ``gain`` is chosen so the prior
    marginal sd of the conductivity at the domain centre equals ``field_sd``.
    """

    grid: GridSpec
    knots: np.ndarray = field(default_factory=knot_lattice)
    kernel_sd: float = 0.11
    sigma_u: float = 1.0
    offset: float = 3.5
    field_sd: float = 0.5
    local = False

    def __post_init__(self):
        knots = np.atleast_2d(np.asarray(self.knots, dtype=float))
        object.__setattr__(self, "knots", knots)
        K = gaussian_kernel(self.grid.cell_centers(), knots, self.kernel_sd)
        object.__setattr__(self, "_K", K)
        centre = gaussian_kernel(np.array([[0.5, 0.5]]), knots, self.kernel_sd)[0]
        object.__setattr__(self, "gain", self.field_sd / (self.sigma_u * np.linalg.norm(centre)))

    @property
    def p(self) -> int:
        return self.knots.shape[0]

    def dim(self, grid: GridSpec) -> int:
        return self.p

    def expand(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.p,):
            raise DimensionError(f"latent vector must have length {self.p}, got {u.shape}")
        return self._K @ u

    def to_field(self, u: np.ndarray) -> np.ndarray:
        return self.offset + self.gain * self.expand(u)

    def in_support(self, u: np.ndarray) -> bool:
        return bool(np.all(self.to_field(u) > 0.0))

    def log_prior(self, u: np.ndarray, side: int | None = None) -> float:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.p,):
            raise DimensionError(f"latent vector must have length {self.p}, got {u.shape}")
        if not self.in_support(u):
            return -np.inf
        return float(-0.5 * np.dot(u, u) / self.sigma_u**2)

    def site_log_ratio(self, *args, **kwargs):
        raise UnsupportedOperation("process-convolution prior has no local site ratio; every latent update is global")

    def sample(self, grid: GridSpec, rng: np.random.Generator, **_) -> np.ndarray:
        """Exact draw of the latent vector (the sampler parameter)."""
        return self.sigma_u * rng.standard_normal(self.p)


Prior = Union[TricubePrior, GmrfPrior, ConvolutionPrior]


def expand_latent(prior: ConvolutionPrior, u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """x at every pixel centre of ``grid``: sum_j u_j k(s - w_j)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (prior.p,):
        raise DimensionError(f"latent vector must have length {prior.p}, got {u.shape}")
    return gaussian_kernel(grid.cell_centers(), prior.knots, prior.kernel_sd) @ u


def log_prior(prior: Prior, x: np.ndarray) -> float:
    return prior.log_prior(x)


def site_log_ratio(prior: Prior, x: np.ndarray, i: int, xi_new: float) -> float:
    if not getattr(prior, "local", False):
        raise UnsupportedOperation("site_log_ratio needs an MRF prior")
    side = int(round(np.sqrt(len(x))))
    return prior.site_log_ratio(np.asarray(x, dtype=float), i, xi_new, neighbour_table(side)[i])


def sample_prior(prior: Prior, rng: np.random.Generator, grid: GridSpec, **kwargs) -> np.ndarray:
    return prior.sample(grid, rng, **kwargs)

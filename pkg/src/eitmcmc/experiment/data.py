"""Synthetic measurements and the built-in truth image."""

from __future__ import annotations

import numpy as np

from ..field_grid import ConductivityField, GridSpec
from ..forward_solver import ConductivityDomainError, FineModel

NOISE_RATIO = 3.0 / 1000.0

# Built-in truth: background 3 with two conductivity-4 inclusions, a disc
# and an axis-aligned bar, given in unit-square coordinates so any side works.
DISC_CENTRE = (0.30, 0.65)
DISC_RADIUS = 0.18
BAR = ((0.55, 0.85), (0.18, 0.42))


def truth_image(side: int, low: float = 3.0, high: float = 4.0) -> ConductivityField:
    grid = GridSpec(side)
    c = grid.cell_centers()
    disc = np.hypot(c[:, 0] - DISC_CENTRE[0], c[:, 1] - DISC_CENTRE[1]) <= DISC_RADIUS
    (x0, x1), (y0, y1) = BAR
    bar = (c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1)
    return ConductivityField(grid, np.where(disc | bar, high, low))


def _nearest_cell(grid: GridSpec, point) -> int:
    d = np.hypot(*(grid.cell_centers() - np.asarray(point)).T)
    return int(np.argmin(d))


def default_tracked(side: int) -> np.ndarray:
    """Three pixels of the built-in truth: inside the background, at the
    disc centre and on the disc rim."""
    grid = GridSpec(side)
    low = _nearest_cell(grid, (0.75, 0.80))
    high = _nearest_cell(grid, DISC_CENTRE)
    rim = _nearest_cell(grid, (DISC_CENTRE[0] + DISC_RADIUS, DISC_CENTRE[1]))
    return np.array([low, high, rim], dtype=np.int64)


def noise_sd(eta: np.ndarray, ratio: float = NOISE_RATIO) -> float:
    """sigma = ratio * max_j |eta_j|."""
    peak = float(np.max(np.abs(eta)))
    if peak == 0.0:
        raise ConductivityDomainError("forward map is identically zero; noise level undefined")
    return ratio * peak


def generate_data(truth: ConductivityField, ratio: float | None = NOISE_RATIO, seed: int = 0,
                  sigma: float | None = None, model=None) -> tuple[np.ndarray, float]:
    """y = eta(truth) + N(0, sigma^2 I).

    ``sigma`` overrides the rule ``ratio * max|eta(truth)|``.  ``ratio=0``
    (or ``sigma=0``) gives noiseless data and reports sigma = 0.
    """
    values = np.asarray(truth.values, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ConductivityDomainError("truth conductivity must be finite and positive")
    model = FineModel(truth.grid) if model is None else model
    eta = model(values)
    if sigma is None:
        sigma = noise_sd(eta, ratio if ratio is not None else 0.0)
    elif sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return eta.copy(), 0.0
    rng = np.random.default_rng(seed)
    return eta + sigma * rng.standard_normal(eta.size), float(sigma)

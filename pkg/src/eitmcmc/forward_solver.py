"""Finite-volume EIT forward model at fine, truncated-iteration and coarse fidelity.

Discretisation: cell-centred finite volumes with a five-point stencil on the
unit square.  The transmissibility of the face between two cells is the
harmonic mean of their conductivities (face length / centre distance = 1 in
2-d).  Electrodes are point electrodes: an electrode's current enters as a
source in its boundary cell and its measured voltage is that cell's
potential.  The pure-Neumann system is singular (null space = constants);
potentials are made unique by a rank-one gauge term, and measured voltages
are reported relative to their mean over the 16 electrodes.

The hot paths (``FineModel``, ``CoarseModel``, ``ApproxModel``) run fused
numba kernels.  ``assemble`` / ``SolverHandle`` build the same system with
scipy.sparse and factor it with LAPACK; that path backs ``transfer_matrix``
and is kept separate on purpose so the two can be checked against each other.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

from .field_grid import (
    N_ELECTRODES,
    ConductivityField,
    DimensionError,
    ElectrodeLayout,
    GridSpec,
    atomic_write_text,
    coarsen_values,
)

INJECTED_CURRENT = 1.0


class ConductivityDomainError(ValueError):
    """Non-positive or non-finite conductivity."""


class FactorizationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DrivePattern:
    injector: int
    current: float = INJECTED_CURRENT

    @property
    def currents(self) -> np.ndarray:
        c = np.full(N_ELECTRODES, -self.current / (N_ELECTRODES - 1))
        c[self.injector] = self.current
        return c


def drive_matrix(current: float = INJECTED_CURRENT) -> np.ndarray:
    """Row p holds the electrode currents of drive pattern p."""
    return np.array([DrivePattern(p, current).currents for p in range(N_ELECTRODES)])


@dataclass(frozen=True, eq=False)
class VoltageSet:
    voltages: np.ndarray  # (16, 16); row p = drive pattern p

    @property
    def flat(self) -> np.ndarray:
        return self.voltages.ravel()

    @classmethod
    def from_flat(cls, y: np.ndarray) -> "VoltageSet":
        return cls(np.asarray(y, dtype=float).reshape(N_ELECTRODES, N_ELECTRODES))


def _check_positive(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise ConductivityDomainError("conductivity must be finite and strictly positive")


# -- numba kernels -----------------------------------------------------------


@numba.njit(cache=True)
def _band_stiffness(x, side):
    """Grounded stiffness in lower band storage: band[j, k] = A[j + k, j].

    The last cell gets its diagonal doubled, a rank-one term that is zero on
    zero-sum right-hand sides once the result is re-centred."""
    m = side * side
    for i in range(m):
        if not (x[i] > 0.0 and x[i] < np.inf):
            raise ValueError("conductivity must be finite and strictly positive")
    band = np.zeros((m, side + 1))
    for r in range(side):
        for c in range(side):
            i = r * side + c
            if c + 1 < side:
                t = 2.0 * x[i] * x[i + 1] / (x[i] + x[i + 1])
                band[i, 0] += t
                band[i + 1, 0] += t
                band[i, 1] = -t
            if r + 1 < side:
                j = i + side
                t = 2.0 * x[i] * x[j] / (x[i] + x[j])
                band[i, 0] += t
                band[j, 0] += t
                band[i, side] = -t
    band[m - 1, 0] *= 2.0
    return band


@numba.njit(cache=True)
def _band_cholesky(band, bw):
    m = band.shape[0]
    for j in range(m):
        d = band[j, 0]
        if not d > 0.0:
            return False
        d = np.sqrt(d)
        band[j, 0] = d
        kmax = min(bw, m - 1 - j)
        for k in range(1, kmax + 1):
            band[j, k] /= d
        for k in range(1, kmax + 1):
            lk = band[j, k]
            if lk != 0.0:
                col = j + k
                for l in range(k, kmax + 1):
                    band[col, l - k] -= band[j, l] * lk
    return True


@numba.njit(cache=True)
def _electrode_voltages(x, side, cells, diag, off):
    """Mean-centred electrode voltages, one row per drive pattern.

    Uses G = P^T A^-1 P = (L^-1 P)^T (L^-1 P), so only forward substitution
    from each electrode cell is needed."""
    m = side * side
    band = _band_stiffness(x, side)
    if not _band_cholesky(band, side):
        raise ValueError("stiffness factorisation failed")
    ne = cells.shape[0]
    Y = np.zeros((ne, m))
    for e in range(ne):
        y = Y[e]
        y[cells[e]] = 1.0
        for j in range(cells[e], m):
            yj = y[j] / band[j, 0]
            y[j] = yj
            if yj != 0.0:
                kmax = min(side, m - 1 - j)
                for k in range(1, kmax + 1):
                    y[j + k] -= band[j, k] * yj
    G = np.empty((ne, ne))
    for a in range(ne):
        for b in range(a, ne):
            s = 0.0
            for j in range(max(cells[a], cells[b]), m):
                s += Y[a, j] * Y[b, j]
            G[a, b] = s
            G[b, a] = s
    # drive = diag I + off 11^T, so drive @ G = diag G + off colsum(G)
    colsum = np.zeros(ne)
    for q in range(ne):
        for e in range(ne):
            colsum[e] += G[q, e]
    out = np.empty((ne, ne))
    for p in range(ne):
        mean = 0.0
        for e in range(ne):
            s = diag * G[p, e] + off * colsum[e]
            out[p, e] = s
            mean += s
        mean /= ne
        for e in range(ne):
            out[p, e] -= mean
    return out


@numba.njit(cache=True)
def _coarse_voltages(v, fine_side, coarse_side, harmonic, cells, diag, off):
    k = fine_side // coarse_side
    xc = np.zeros(coarse_side * coarse_side)
    for i in range(fine_side):
        for j in range(fine_side):
            t = v[i * fine_side + j]
            xc[(i // k) * coarse_side + j // k] += 1.0 / t if harmonic else t
    for c in range(xc.size):
        xc[c] = k * k / xc[c] if harmonic else xc[c] / (k * k)
    return _electrode_voltages(xc, coarse_side, cells, diag, off)


@numba.njit(cache=True)
def _ic0(band, side):
    """IC(0) factor of the grounded five-point matrix, same band layout."""
    m = band.shape[0]
    L = np.zeros((m, 3))  # columns: diag, (i+1, i), (i+side, i)
    for i in range(m):
        s = band[i, 0]
        if i >= 1:
            s -= L[i - 1, 1] ** 2
        if i >= side:
            s -= L[i - side, 2] ** 2
        d = np.sqrt(s)
        L[i, 0] = d
        L[i, 1] = band[i, 1] / d
        L[i, 2] = band[i, side] / d
    return L


@numba.njit(cache=True)
def _ic0_apply(L, side, r, z):
    m = L.shape[0]
    for i in range(m):
        s = r[i]
        if i >= 1:
            s -= L[i - 1, 1] * z[i - 1]
        if i >= side:
            s -= L[i - side, 2] * z[i - side]
        z[i] = s / L[i, 0]
    for i in range(m - 1, -1, -1):
        s = z[i]
        if i + 1 < m:
            s -= L[i, 1] * z[i + 1]
        if i + side < m:
            s -= L[i, 2] * z[i + side]
        z[i] = s / L[i, 0]


@numba.njit(cache=True)
def _band_matvec(band, side, v, out):
    m = band.shape[0]
    for i in range(m):
        out[i] = band[i, 0] * v[i]
    for i in range(m - 1):
        a = band[i, 1]
        out[i + 1] += a * v[i]
        out[i] += a * v[i + 1]
    for i in range(m - side):
        a = band[i, side]
        out[i + side] += a * v[i]
        out[i] += a * v[i + side]


@numba.njit(cache=True)
def _pcg_potentials(x, side, rhs, iters):
    """``iters`` IC(0)-preconditioned CG steps per right-hand side from a zero
    start on the grounded system.  Columns that converge exactly are frozen."""
    m = side * side
    band = _band_stiffness(x, side)
    L = _ic0(band, side)
    nr = rhs.shape[0]
    X = np.zeros((nr, m))
    r = np.empty(m)
    z = np.empty(m)
    p = np.empty(m)
    q = np.empty(m)
    for c in range(nr):
        xc = X[c]
        for i in range(m):
            r[i] = rhs[c, i]
        _ic0_apply(L, side, r, z)
        rz = 0.0
        for i in range(m):
            p[i] = z[i]
            rz += r[i] * z[i]
        rz0 = rz
        for _ in range(iters):
            if rz <= 1e-300 or rz <= 1e-32 * rz0:
                break
            _band_matvec(band, side, p, q)
            pq = 0.0
            for i in range(m):
                pq += p[i] * q[i]
            alpha = rz / pq
            for i in range(m):
                xc[i] += alpha * p[i]
                r[i] -= alpha * q[i]
            _ic0_apply(L, side, r, z)
            rz_new = 0.0
            for i in range(m):
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            for i in range(m):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
    return X


def _centred_electrode_rows(potentials, cells):
    V = potentials[:, cells]
    return V - V.mean(axis=1, keepdims=True)


# -- solver handle (scipy path) ----------------------------------------------


def _face_lists(side):
    idx = np.arange(side * side).reshape(side, side)
    left, right = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    up, down = idx[:-1, :].ravel(), idx[1:, :].ravel()
    return np.concatenate([left, up]), np.concatenate([right, down])


@dataclass(frozen=True, eq=False)
class SolverHandle:
    """Assembled system for one conductivity field.

    ``stiffness`` is the singular Neumann matrix (before gauge fixing).
    Solves return the zero-mean potential, i.e. the solution of the system
    augmented with ``gauge_scale / m * ones ones^T``."""

    grid: GridSpec
    layout: ElectrodeLayout
    stiffness: sp.csr_matrix
    _factor: np.ndarray

    @property
    def gauge_scale(self) -> float:
        return float(self.stiffness.diagonal().max())

    def gauged_matrix(self) -> np.ndarray:
        m = self.grid.m
        return self.stiffness.toarray() + (self.gauge_scale / m) * np.ones((m, m))

    def incidence(self) -> np.ndarray:
        """(m, 16) map from electrode currents to cell sources."""
        P = np.zeros((self.grid.m, N_ELECTRODES))
        P[self.layout.cells, np.arange(N_ELECTRODES)] = 1.0
        return P

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean potentials for zero-sum right-hand side columns."""
        rhs = np.asarray(rhs, dtype=float)
        if np.any(np.abs(rhs.sum(axis=0)) > 1e-12 * max(1.0, np.abs(rhs).max())):
            raise ValueError("right-hand sides must sum to zero (current conservation)")
        v = cho_solve_banded((self._factor, True), rhs, check_finite=False)
        return v - v.mean(axis=0)

    def voltages(self, current: float = INJECTED_CURRENT) -> VoltageSet:
        v = self.solve(self.incidence() @ drive_matrix(current).T)
        return VoltageSet(_centred_electrode_rows(v.T, self.layout.cells))


def assemble(field: ConductivityField, layout: ElectrodeLayout | None = None) -> SolverHandle:
    values = field.values
    _check_positive(values)
    grid = field.grid
    layout = layout or ElectrodeLayout(grid)
    if layout.grid != grid:
        raise DimensionError("electrode layout and field live on different grids")
    a, b = _face_lists(grid.side)
    t = 2.0 * values[a] * values[b] / (values[a] + values[b])
    m = grid.m
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    data = np.concatenate([-t, -t, t, t])
    A = sp.csr_matrix(sp.coo_matrix((data, (rows, cols)), shape=(m, m)))
    A.sum_duplicates()
    # grounded copy in LAPACK lower band form for the factorisation
    side = grid.side
    ab = np.zeros((side + 1, m))
    ab[0] = A.diagonal()
    ab[0, -1] *= 2.0
    ab[1, :-1] = A.diagonal(-1)
    ab[side, :-side] = A.diagonal(-side)
    try:
        factor = cholesky_banded(ab, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(A.toarray() + np.ones((m, m)) * ab[0].max() / m)
        raise FactorizationError(f"Cholesky failed (condition number ~{cond:.3e})") from exc
    return SolverHandle(grid, layout, A, factor)


def transfer_matrix(field: ConductivityField, layout: ElectrodeLayout | None = None) -> np.ndarray:
    """Linear map from a zero-sum electrode current vector to mean-centred
    electrode voltages.  Symmetric; ``T @ currents(p)`` is row p of the
    voltage set."""
    h = assemble(field, layout)
    C = np.eye(N_ELECTRODES) - 1.0 / N_ELECTRODES
    v = h.solve(h.incidence() @ C)
    return C @ v[h.layout.cells]


# -- public solves -----------------------------------------------------------


class FineModel:
    """Exact (direct banded Cholesky) forward map on the fine grid."""

    fidelity = "fine"

    def __init__(self, grid: GridSpec, current: float = INJECTED_CURRENT):
        self.grid = grid
        self._cells = ElectrodeLayout(grid).cells
        self._drive = drive_matrix(current)
        self._a = self._drive[0, 0] - self._drive[0, 1]
        self._b = self._drive[0, 1]
        self.calls = 0

    def __call__(self, values: np.ndarray) -> np.ndarray:
        self.calls += 1
        values = np.ascontiguousarray(values, dtype=float)
        if values.size != self.grid.m:
            raise DimensionError(f"expected {self.grid.m} conductivities, got {values.size}")
        try:
            out = _electrode_voltages(values, self.grid.side, self._cells, self._a, self._b)
        except ValueError as exc:
            raise ConductivityDomainError(str(exc)) from None
        return out.ravel()


class ApproxModel(FineModel):
    """Truncated IC(0)-preconditioned CG on the fine grid: a fixed number
    of iterations from a zero initial guess."""

    fidelity = "approx"

    def __init__(self, grid: GridSpec, iters: int, current: float = INJECTED_CURRENT):
        super().__init__(grid, current)
        if iters < 1:
            raise ValueError("iters must be >= 1")
        self.iters = int(iters)
        P = np.zeros((grid.m, N_ELECTRODES))
        P[self._cells, np.arange(N_ELECTRODES)] = 1.0
        self._rhs = np.ascontiguousarray((P @ self._drive.T).T)

    def potentials(self, values: np.ndarray) -> np.ndarray:
        values = np.ascontiguousarray(values, dtype=float)
        if values.size != self.grid.m:
            raise DimensionError(f"expected {self.grid.m} conductivities, got {values.size}")
        try:
            return _pcg_potentials(values, self.grid.side, self._rhs, self.iters)
        except ValueError as exc:
            raise ConductivityDomainError(str(exc)) from None

    def __call__(self, values: np.ndarray) -> np.ndarray:
        self.calls += 1
        return _centred_electrode_rows(self.potentials(values), self._cells).ravel()


class CoarseModel:
    """Coarsen the fine field by block means, then solve exactly on the coarse grid."""

    fidelity = "coarse"

    def __init__(self, fine_grid: GridSpec, coarse_grid: GridSpec, mean: str = "arithmetic",
                 current: float = INJECTED_CURRENT):
        if fine_grid.side % coarse_grid.side:
            raise DimensionError(f"coarse side {coarse_grid.side} does not divide fine side {fine_grid.side}")
        self.grid = fine_grid
        self.coarse_grid = coarse_grid
        if mean not in ("arithmetic", "harmonic"):
            raise ValueError(f"unknown block mean {mean!r}")
        self.mean = mean
        self._inner = FineModel(coarse_grid, current)
        # block-averaging operator; rows sum to one
        eye = np.eye(fine_grid.m)
        self._avg = np.ascontiguousarray(
            np.array([coarsen_values(e, fine_grid.side, coarse_grid.side) for e in eye]).T)
        inner = self._inner
        self._args = (fine_grid.side, coarse_grid.side, mean == "harmonic", inner._cells, inner._a, inner._b)
        self.calls = 0

    def __call__(self, values: np.ndarray) -> np.ndarray:
        self.calls += 1
        v = np.ascontiguousarray(values, dtype=float).reshape(-1)
        if v.size != self.grid.m:
            raise DimensionError(f"expected {self.grid.m} conductivities, got {v.size}")
        try:
            out = _coarse_voltages(v, *self._args)
        except ValueError as exc:
            raise ConductivityDomainError(str(exc)) from None
        return out.reshape(-1)


def solve_fine(field: ConductivityField) -> VoltageSet:
    return VoltageSet.from_flat(FineModel(field.grid)(field.values))


def solve_approx(field: ConductivityField, iters: int) -> VoltageSet:
    return VoltageSet.from_flat(ApproxModel(field.grid, iters)(field.values))


def solve_coarse(field: ConductivityField, coarse_grid: GridSpec, mean: str = "arithmetic") -> VoltageSet:
    return VoltageSet.from_flat(CoarseModel(field.grid, coarse_grid, mean)(field.values))


# -- voltage CSV -------------------------------------------------------------


def save_voltages(vs: VoltageSet, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(range(N_ELECTRODES))
    for row in vs.voltages:
        w.writerow(repr(float(v)) for v in row)
    atomic_write_text(path, buf.getvalue())


def load_voltages(path: str | os.PathLike) -> VoltageSet:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if len(rows) != N_ELECTRODES + 1:
        raise ValueError(f"{path}: expected header + {N_ELECTRODES} rows, found {len(rows)} lines")
    try:
        data = np.array([[float(t) for t in r] for r in rows[1:]])
    except ValueError:
        raise ValueError(f"{path}: non-numeric voltage entry") from None
    if data.shape != (N_ELECTRODES, N_ELECTRODES):
        raise ValueError(f"{path}: expected a {N_ELECTRODES}x{N_ELECTRODES} table")
    return VoltageSet(data)

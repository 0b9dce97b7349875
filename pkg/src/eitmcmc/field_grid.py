"""Lattice geometry, conductivity fields and the fine-to-coarse transfer.

Fields are stored row-major with (row 0, col 0) at the top-left of the
image.  Physical coordinates put the origin of the unit square at the
bottom-left, so the centre of cell (r, c) sits at
``((c + 0.5) h, 1 - (r + 0.5) h)``.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GRAY_BOUNDS = (2.5, 4.5)
N_ELECTRODES = 16


class DimensionError(ValueError):
    """Grid sizes or vector lengths that do not fit together."""


class FieldFormatError(ValueError):
    """Malformed field file."""


@dataclass(frozen=True)
class GridSpec:
    side: int

    def __post_init__(self):
        if int(self.side) != self.side or self.side < 2:
            raise DimensionError(f"grid side must be an integer >= 2, got {self.side}")

    @property
    def m(self) -> int:
        return self.side * self.side

    @property
    def cell_size(self) -> float:
        return 1.0 / self.side

    def cell_centers(self) -> np.ndarray:
        """(m, 2) array of physical cell-centre coordinates, row-major."""
        h = self.cell_size
        t = (np.arange(self.side) + 0.5) * h
        cx, cy = np.meshgrid(t, 1.0 - t)
        return np.column_stack([cx.ravel(), cy.ravel()])


@dataclass(frozen=True, eq=False)
class ConductivityField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.grid.m:
            raise DimensionError(
                f"field has {values.size} values, grid {self.grid.side}x{self.grid.side} needs {self.grid.m}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, side: int, value: float) -> "ConductivityField":
        return cls(GridSpec(side), np.full(side * side, float(value)))

    def image(self) -> np.ndarray:
        return self.values.reshape(self.grid.side, self.grid.side)

    def scaled(self, c: float) -> "ConductivityField":
        return ConductivityField(self.grid, c * self.values)


def electrode_offsets(side: int) -> list[int]:
    """Cell offsets of the four electrodes on one side, counted along the
    counter-clockwise traversal direction.  Gives 3, 9, 15, 21 for side 24."""
    return [((2 * k + 1) * side) // 8 for k in range(4)]


@dataclass(frozen=True)
class ElectrodeLayout:
    """Sixteen point electrodes, four per side, numbered counter-clockwise
    starting on the bottom edge.  Electrode k sits at the midpoint of the
    outer face of boundary cell ``cells[k]``."""

    grid: GridSpec

    @property
    def count(self) -> int:
        return N_ELECTRODES

    @property
    def cells(self) -> np.ndarray:
        s = self.grid.side
        rc = []
        for o in electrode_offsets(s):
            rc.append((s - 1, o))  # bottom, left to right
        for o in electrode_offsets(s):
            rc.append((s - 1 - o, s - 1))  # right, bottom to top
        for o in electrode_offsets(s):
            rc.append((0, s - 1 - o))  # top, right to left
        for o in electrode_offsets(s):
            rc.append((o, 0))  # left, top to bottom
        return np.array([r * s + c for r, c in rc], dtype=np.int64)

    @property
    def positions(self) -> np.ndarray:
        s = self.grid.side
        h = 1.0 / s
        pts = []
        for o in electrode_offsets(s):
            pts.append(((o + 0.5) * h, 0.0))
        for o in electrode_offsets(s):
            pts.append((1.0, (o + 0.5) * h))
        for o in electrode_offsets(s):
            pts.append((1.0 - (o + 0.5) * h, 1.0))
        for o in electrode_offsets(s):
            pts.append((0.0, 1.0 - (o + 0.5) * h))
        return np.array(pts)


def coarsen(fine: ConductivityField, coarse_grid: GridSpec, mean: str = "arithmetic") -> ConductivityField:
    """Block-average a fine field onto a coarser lattice.

    ``mean`` is ``"arithmetic"`` (default) or ``"harmonic"``.
    """
    return ConductivityField(coarse_grid, coarsen_values(fine.values, fine.grid.side, coarse_grid.side, mean))


def coarsen_values(values: np.ndarray, fine_side: int, coarse_side: int, mean: str = "arithmetic") -> np.ndarray:
    if fine_side % coarse_side:
        raise DimensionError(f"coarse side {coarse_side} does not divide fine side {fine_side}")
    k = fine_side // coarse_side
    blocks = np.asarray(values, dtype=float).reshape(coarse_side, k, coarse_side, k)
    if mean == "arithmetic":
        return blocks.mean(axis=(1, 3)).ravel()
    if mean == "harmonic":
        return 1.0 / (1.0 / blocks).mean(axis=(1, 3)).ravel()
    raise ValueError(f"unknown block mean {mean!r}")


def refine_values(values: np.ndarray, coarse_side: int, factor: int) -> np.ndarray:
    """Piecewise-constant prolongation: each coarse cell becomes a factor x factor block."""
    img = np.asarray(values, dtype=float).reshape(coarse_side, coarse_side)
    return np.kron(img, np.ones((factor, factor))).ravel()


# -- serialization -----------------------------------------------------------


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write-then-rename so partial files are never left in place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_matrix(mat: np.ndarray) -> str:
    rows, cols = mat.shape
    lines = [f"{rows} {cols}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in mat]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, source: str = "<string>") -> np.ndarray:
    lines = [ln for ln in text.splitlines()]
    if not lines or not lines[0].strip():
        raise FieldFormatError(f"{source}: line 1: missing 'rows cols' header")
    header = lines[0].split()
    try:
        rows, cols = (int(t) for t in header)
    except ValueError:
        raise FieldFormatError(f"{source}: line 1: header must be two integers 'rows cols'") from None
    body = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != rows:
        raise FieldFormatError(f"{source}: expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for r, (lineno, ln) in enumerate(body):
        toks = ln.split()
        if len(toks) != cols:
            raise FieldFormatError(f"{source}: line {lineno}: expected {cols} columns, found {len(toks)}")
        try:
            out[r] = [float(t) for t in toks]
        except ValueError:
            raise FieldFormatError(f"{source}: line {lineno}: non-numeric token") from None
    return out


def save_field(field_: ConductivityField, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_matrix(field_.image()))


def load_field(path: str | os.PathLike) -> ConductivityField:
    mat = parse_matrix(Path(path).read_text(), source=str(path))
    if mat.shape[0] != mat.shape[1]:
        raise FieldFormatError(f"{path}: field must be square, got {mat.shape[0]}x{mat.shape[1]}")
    return ConductivityField(GridSpec(mat.shape[0]), mat.ravel())


def save_pgm(values: np.ndarray, side: int, path: str | os.PathLike, lo: float = 2.5, hi: float = 4.5) -> None:
    """Plain (P2) greyscale export; [lo, hi] maps linearly onto [0, 255]."""
    img = np.asarray(values, dtype=float).reshape(side, side)
    g = np.clip(np.rint((img - lo) / (hi - lo) * 255.0), 0, 255).astype(int)
    lines = ["P2", f"{side} {side}", "255"] + [" ".join(str(v) for v in row) for row in g]
    atomic_write_text(path, "\n".join(lines) + "\n")

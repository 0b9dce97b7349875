"""Thinned chain records and their CSV form."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..field_grid import atomic_write_text
from .state import CostWeights

META = ("record_index", "cumulative_fine_evals", "cumulative_approx_evals", "cumulative_coarse_evals",
        "acceptance_rate_stage1", "acceptance_rate_stage2")


class TraceFormatError(ValueError):
    pass


@dataclass
class Trace:
    """``columns`` names the recorded components (pixel or latent indices)."""

    columns: np.ndarray
    counts: list[tuple[int, int, int]] = field(default_factory=list)
    rates: list[tuple[float, float]] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.states)

    def append(self, x: np.ndarray, counts: tuple[int, int, int], rates: tuple[float, float]) -> None:
        self.counts.append(tuple(int(c) for c in counts))
        self.rates.append((float(rates[0]), float(rates[1])))
        self.states.append(np.array(x[self.columns], dtype=float))

    @property
    def values(self) -> np.ndarray:
        return np.array(self.states).reshape(len(self), len(self.columns))

    def cost(self, weights: CostWeights = CostWeights()) -> np.ndarray:
        c = np.array(self.counts, dtype=float).reshape(-1, 3)
        return c @ np.array([weights.fine, weights.approx, weights.coarse])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(META) + [f"x{j}" for j in self.columns])
        for k, (cnt, rt, s) in enumerate(zip(self.counts, self.rates, self.states)):
            w.writerow([k, *cnt, repr(rt[0]), repr(rt[1])] + [repr(float(v)) for v in s])
        return buf.getvalue()

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Trace":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise TraceFormatError(f"{path}: empty trace file")
        head = rows[0]
        if tuple(head[: len(META)]) != META or any(not h.startswith("x") for h in head[len(META):]):
            raise TraceFormatError(f"{path}: unexpected header")
        try:
            cols = [int(h[1:]) for h in head[len(META):]]
            t = cls(np.array(cols, dtype=np.int64))
            for lineno, r in enumerate(rows[1:], start=2):
                if len(r) != len(head):
                    raise TraceFormatError(f"{path}: line {lineno}: expected {len(head)} fields, found {len(r)}")
                t.counts.append((int(r[1]), int(r[2]), int(r[3])))
                t.rates.append((float(r[4]), float(r[5])))
                t.states.append(np.array([float(v) for v in r[len(META):]]))
        except TraceFormatError:
            raise
        except ValueError as exc:
            raise TraceFormatError(f"{path}: {exc}") from None
        return t

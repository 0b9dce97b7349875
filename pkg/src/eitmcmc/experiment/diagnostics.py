"""Trace summaries: moments, effective sample size, mode switches, and
cost-aligned comparison tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..samplers.state import CostWeights
from ..samplers.trace import Trace

MIDLINE = 3.5


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation at lags 0..n-1 via zero-padded FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> tuple[float, bool]:
    """Geyer's initial monotone sequence estimate of n / tau.

    Returns ``(ess, degenerate)``; a constant series is reported as
    ``(n, True)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.ptp(x) == 0.0:
        return float(n), True
    rho = autocorrelation(x)
    npairs = n // 2
    gam = rho[: 2 * npairs].reshape(npairs, 2).sum(axis=1)
    stop = np.flatnonzero(gam <= 0.0)
    gam = gam[: stop[0]] if stop.size else gam
    gam = np.minimum.accumulate(gam)
    tau = -1.0 + 2.0 * gam.sum()
    tau = max(tau, 1.0 / n)
    return float(n / tau), False


def mode_switches(x: np.ndarray, midline: float = MIDLINE) -> int:
    """Number of crossings of ``midline``; values exactly on it keep the last side."""
    side = np.sign(np.asarray(x, dtype=float) - midline)
    side = side[side != 0]
    return int(np.count_nonzero(side[1:] != side[:-1]))


@dataclass
class Summary:
    records: int
    columns: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray
    switches: np.ndarray
    rate_stage1: float
    rate_stage2: float
    final_counts: tuple[int, int, int]

    def report(self, tracked: np.ndarray | None = None) -> str:
        lines = [
            f"records {self.records}",
            f"solver_calls fine={self.final_counts[0]} approx={self.final_counts[1]} coarse={self.final_counts[2]}",
            f"acceptance_stage1 {self.rate_stage1:.4f}",
            f"acceptance_stage2 {self.rate_stage2:.4f}",
        ]
        cols = list(self.columns)
        pick = range(len(cols)) if tracked is None else [cols.index(int(t)) for t in tracked if int(t) in cols]
        lines.append("pixel mean variance ess degenerate mode_switches")
        for j in pick:
            lines.append(f"{cols[j]} {self.mean[j]:.6g} {self.variance[j]:.6g} {self.ess[j]:.1f} "
                         f"{int(self.degenerate[j])} {self.switches[j]}")
        return "\n".join(lines) + "\n"


def summarize(trace: Trace, burn: int = 0) -> Summary:
    """Statistics over records ``burn:`` of a non-empty trace."""
    if len(trace) == 0:
        raise ValueError("trace has no records")
    V = trace.values[burn:]
    if V.shape[0] == 0:
        raise ValueError(f"burn-in {burn} discards every record")
    ess, deg = zip(*(effective_sample_size(V[:, j]) for j in range(V.shape[1])))
    r1, r2 = trace.rates[-1]
    return Summary(
        records=V.shape[0],
        columns=trace.columns,
        mean=V.mean(axis=0),
        variance=np.where(np.array(deg), 0.0, V.var(axis=0)),
        ess=np.array(ess),
        degenerate=np.array(deg),
        switches=np.array([mode_switches(V[:, j]) for j in range(V.shape[1])]),
        rate_stage1=r1,
        rate_stage2=r2,
        final_counts=trace.counts[-1],
    )


def compare(traces: list[Trace], column: int, m: int, weights: CostWeights = CostWeights()) -> np.ndarray:
    """Cost-aligned table for trace plots.

    The first trace sets the cost axis (effort / m at each of its
    records); every trace contributes the value of ``column`` at its last
    record at or before that cost, NaN if it has none yet.  Returns an
    array of shape (records, 1 + len(traces)).
    """
    if not traces:
        raise ValueError("nothing to compare")
    axis = traces[0].cost(weights) / m
    out = np.full((axis.size, 1 + len(traces)), np.nan)
    out[:, 0] = axis
    for k, t in enumerate(traces):
        cols = list(t.columns)
        if column not in cols:
            raise ValueError(f"trace {k} does not record pixel {column}")
        c = t.cost(weights) / m
        v = t.values[:, cols.index(column)]
        pos = np.searchsorted(c, axis, side="right") - 1
        ok = pos >= 0
        out[ok, 1 + k] = v[pos[ok]]
    return out

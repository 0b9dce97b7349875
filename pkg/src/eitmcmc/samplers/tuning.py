"""Burn-in tuning of proposal scales by windowed stochastic approximation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .state import ConfigurationError


@dataclass
class ScaleTuner:
    """Robbins-Monro update on log(scale), one step per window of proposals:

        log s_{j+1} = log s_j + gain * j^(-decay) * (rate_j - target)

    ``frozen`` stops all changes; the sampler freezes the tuner at the end
    of burn-in so the sampling phase runs a fixed kernel.
    """

    scale: float
    target: float = 0.45
    window: int = 100
    gain: float = 1.0
    decay: float = 0.6
    frozen: bool = False
    windows_done: int = 0
    _acc: int = 0
    _prop: int = 0
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.target < 1.0:
            raise ConfigurationError(f"target rate must lie in (0, 1), got {self.target}")
        if not self.scale > 0:
            raise ConfigurationError("initial scale must be positive")
        if self.window < 1:
            raise ConfigurationError("tuning window must be >= 1")

    def observe(self, accepted: int, proposed: int) -> float:
        """Feed counts since the last call; returns the (possibly new) scale."""
        if self.frozen:
            return self.scale
        self._acc += accepted
        self._prop += proposed
        while self._prop >= self.window:
            rate = self._acc / self._prop
            self.windows_done += 1
            step = self.gain * self.windows_done ** (-self.decay) * (rate - self.target)
            self.scale = float(self.scale * np.exp(step))
            self.history.append(rate)
            self._acc = self._prop = 0
        return self.scale

    def freeze(self) -> None:
        self.frozen = True

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("scale", "target", "window", "gain", "decay", "frozen", "windows_done", "_acc", "_prop", "history")}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleTuner":
        t = cls(**{k: d[k] for k in ("scale", "target", "window", "gain", "decay")})
        t.frozen, t.windows_done, t._acc, t._prop = d["frozen"], d["windows_done"], d["_acc"], d["_prop"]
        t.history = list(d["history"])
        return t


def tune_scale(kernel: Callable[[float], tuple[int, int]], scale: float, target_rate: float,
               window: int = 100, n_windows: int = 50, **kw) -> tuple[float, ScaleTuner]:
    """Drive ``kernel`` until ``n_windows`` tuning windows have elapsed.

    ``kernel(scale)`` runs some proposals at the given scale and returns
    ``(accepted, proposed)`` counts for them.  Returns the final scale and
    the tuner, whose ``history`` holds the per-window acceptance rates.
    """
    tuner = ScaleTuner(scale, target_rate, window, **kw)
    while tuner.windows_done < n_windows:
        acc, prop = kernel(tuner.scale)
        if prop <= 0:
            raise ConfigurationError("kernel reported no proposals")
        tuner.observe(acc, prop)
    tuner.freeze()
    return tuner.scale, tuner

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def dense_neumann(values: np.ndarray, side: int) -> np.ndarray:
    """Independent dense assembly of the cell-centred Neumann matrix."""
    m = side * side
    A = np.zeros((m, m))
    img = values.reshape(side, side)
    for r in range(side):
        for c in range(side):
            i = r * side + c
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < side and cc < side:
                    j = rr * side + cc
                    a, b = img[r, c], img[rr, cc]
                    t = 2 * a * b / (a + b)
                    A[i, i] += t
                    A[j, j] += t
                    A[i, j] -= t
                    A[j, i] -= t
    return A


CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    """Log one acceptance line; also echoed in the terminal summary."""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[n] = line
    import sys
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])

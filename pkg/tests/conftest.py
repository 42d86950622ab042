import math

import numpy as np
import pytest

from kdvlab.spectral import PeriodicGrid


@pytest.fixture
def grid64():
    return PeriodicGrid(2 * math.pi, 64)


@pytest.fixture
def grid128():
    return PeriodicGrid(2 * math.pi, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])

from __future__ import annotations

from functools import lru_cache

import pytest

from torus_nystrom.geometry import PatchGrid, TorusShape
from torus_nystrom.operator import NystromOperator


@lru_cache(maxsize=None)
def _operator(delta1: float, delta2: float, p1: int, p2: int, K: int = 1) -> NystromOperator:
    return NystromOperator(TorusShape(delta1, delta2), PatchGrid(p1, p2), K=K)


@pytest.fixture(scope="session")
def operator_cache():
    """Builds each (shape, grid, K) operator once per test session."""
    return _operator


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Records one PASS/FAIL line for an acceptance criterion."""

    def report(criterion, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

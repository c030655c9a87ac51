"""Shared fixtures and the acceptance summary printed at the end of a run."""

import pytest

from aklab import DEFAULT_SEED
from aklab.functions import constant, piecewise_linear, tanh
from aklab.lsde import ModelSpec, XiSpec

ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


def record(criterion: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((criterion, title, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, title, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d} {title}: {detail}")


@pytest.fixture(scope="session")
def seed() -> int:
    return DEFAULT_SEED


@pytest.fixture(scope="session")
def smooth_model() -> ModelSpec:
    """sigma(t) = 0.5 (1 + t), gamma = 1, f = tanh, xi = 1."""
    return ModelSpec(piecewise_linear([(0.0, 0.5), (1.0, 1.0)]), constant(1.0), tanh(), XiSpec("constant", kappa=1.0))


@pytest.fixture(scope="session")
def gbm_model() -> ModelSpec:
    """sigma = 1, gamma = 0, f = 0, kappa = 1."""
    return ModelSpec(constant(1.0), constant(0.0), constant(0.0), XiSpec("constant", kappa=1.0))

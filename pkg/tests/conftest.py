import numpy as np
import pytest

from critnls.config import load_config
from critnls.dynamics import PhysParams, StepSchedule, evolve, log_spaced_times
from critnls.grid import Field, Frame, GridSpec, bracket_power, smooth_taper


@pytest.fixture(scope="session")
def grid1():
    return GridSpec(1, 40.0, 1024)


def tapered_tail(grid, n=2):
    return Field(grid, bracket_power(grid, -n) * smooth_taper(grid, 0.1) + 0j, Frame.V, 0.0)


@pytest.fixture(scope="session")
def phi0(grid1):
    return tapered_tail(grid1)


def compact_run(phi, lam, b, eps_end=1e-6, per_decade=80):
    params = PhysParams(phi.grid.dimension, lam, b)
    times = log_spaced_times(b, eps_end, per_decade=per_decade, eps_start=1.0)
    return evolve(phi, params, StepSchedule.compact(b, eps_end, snapshot_times=times))


@pytest.fixture(scope="session")
def dissipative_run(phi0):
    return compact_run(phi0, -1j, 20.0)


@pytest.fixture(scope="session")
def conservative_run(phi0):
    return compact_run(phi0, 1.0, 20.0)


@pytest.fixture
def default_config():
    return load_config(None)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])

import numpy as np
import pytest

from boussinesq_lab.fields import GridSpec
from boussinesq_lab.initial_data import DataParams2D, build_a0_2d, default_grid, make_linear_data
from boussinesq_lab.linear_flow import LinearFlow

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record_criterion(request, capsys):
    """Print one PASS/FAIL line now and repeat it in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        request.config.stash[_ACCEPTANCE_KEY].append((number, bool(ok), detail))
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(2, 1.0, 32)


@pytest.fixture(scope="session")
def small_grid_3d():
    return GridSpec(3, 1.0, 16)


@pytest.fixture(scope="session")
def data_2d():
    """Large 2D data at eps = 0.25 on the default L = 16 grid."""
    eps = 0.25
    grid = default_grid(2, eps)
    a0 = build_a0_2d(DataParams2D(eps), grid)
    U0, Theta0 = make_linear_data(a0)
    return {"eps": eps, "grid": grid, "a0": a0, "U0": U0, "Theta0": Theta0}


@pytest.fixture(scope="session")
def flow_2d(data_2d):
    return LinearFlow.from_initial(data_2d["U0"], data_2d["Theta0"], 1.0, 1.0)

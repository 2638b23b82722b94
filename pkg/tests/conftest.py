import warnings

import pytest

from rdafront.front import build_initial_guess, solve_front_bvp
from rdafront.kinetics import KlausmeierModel

MU = (0.1, 0.1, 2.0)


@pytest.fixture(scope="session")
def km():
    return KlausmeierModel(MU)


@pytest.fixture(scope="session")
def front_d2(km):
    return solve_front_bvp(build_initial_guess(km, 1e-2, 0.0))


@pytest.fixture(scope="session")
def front_d3(km):
    return solve_front_bvp(build_initial_guess(km, 1e-3, 0.0))


@pytest.fixture(autouse=True)
def _quiet_regime_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="delta = .* exceeds delta0")
        yield


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

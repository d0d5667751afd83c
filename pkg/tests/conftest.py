import pytest

from rmperception.mdp import micro_grid, office_layout
from rmperception.reward_machine import coffee_rm, phi1_rm, phi2_rm


@pytest.fixture(scope="session")
def office():
    return office_layout()


@pytest.fixture(scope="session")
def micro():
    return micro_grid()


@pytest.fixture(scope="session")
def coffee():
    return coffee_rm()


@pytest.fixture(scope="session")
def phi1():
    return phi1_rm()


@pytest.fixture(scope="session")
def phi2():
    return phi2_rm()


def s(office, i, j):
    """Office state s_ij (1-based row and column)."""
    return office.state_of(i - 1, j - 1)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

import pytest

from ltrdesign.lqg import synthesize
from ltrdesign.specsolver import solve_design

import cases

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def plant():
    return cases.plant()


def _design(specs, plant):
    rec = solve_design(specs, plant)
    assert rec.valid, rec.reason
    return rec, synthesize(plant, rec.lead, rec.lag, gap_band=(specs.omega11, rec.omega0))


@pytest.fixture(scope="session")
def case3(plant):
    return _design(cases.specs(cases.CASE3_BOUNDS, cases.CASE3), plant)


@pytest.fixture(scope="session")
def modified(plant):
    return _design(cases.specs(cases.MODIFIED_BOUNDS, cases.CASE3), plant)


@pytest.fixture(scope="session")
def case2(plant):
    return _design(cases.specs(cases.CASE2_BOUNDS, cases.CASE2), plant)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

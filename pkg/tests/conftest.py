import pytest

from gehshift.scenario_gen import SkewProfile, generate_suite
from gehshift.scenario_model import MovementId, Scenario, Vehicle

_ACCEPTANCE = {}


def mv(name):
    return MovementId.parse(name)


@pytest.fixture
def small_suite():
    return generate_suite(7, 4, SkewProfile.DIRICHLET, n_vehicles=600)


@pytest.fixture
def one_vehicle():
    def make(t, movement="N_T", horizon=3600.0):
        return Scenario("one", horizon, (Vehicle(t, mv(movement)),))
    return make


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPTANCE[report.nodeid] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.failed:
        _ACCEPTANCE[report.nodeid] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _ACCEPTANCE.items():
        name = nodeid.split("::")[-1]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")

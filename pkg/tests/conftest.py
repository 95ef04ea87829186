import pytest

from parapet.perception import PerceptionConfig, calibrate_priors
from parapet.protection import SensorFusionProtection
from parapet.scenario import ScenarioConfig, calibration_runs, sign_map_for


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def perception():
    return PerceptionConfig()


@pytest.fixture(scope="session")
def prior(scenario, perception):
    runs = calibration_runs(scenario, perception, 45, 0)
    return calibrate_priors(runs, sign_map_for(scenario, perception))


@pytest.fixture(scope="session")
def fusion(prior):
    return SensorFusionProtection(prior)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

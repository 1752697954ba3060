import pytest

from kmcnet.config import config_from_dict
from kmcnet.experiments import base_config
from kmcnet.simulation import Simulation


def make_config(**overrides):
    return config_from_dict(base_config(**overrides))


def make_sim(seed=0, **overrides):
    return Simulation(make_config(**overrides), seed=seed)


@pytest.fixture
def sim_factory():
    return make_sim


# (criterion, verdict line) pairs collected by the acceptance suite
ACCEPTANCE: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)

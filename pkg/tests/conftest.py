import numpy as np
import pytest

from frnet.gradsuite import SUITE_NETWORK
from frnet.network import NetworkConfig
from frnet.training import xavier_init


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config() -> NetworkConfig:
    return SUITE_NETWORK


@pytest.fixture
def desk_config() -> NetworkConfig:
    return NetworkConfig(electrodes=8, trial_length=256, classes=4)


@pytest.fixture
def small_params(small_config):
    return xavier_init(small_config, 3)


# --- acceptance summary ---------------------------------------------------
# Acceptance tests append one "PASS|FAIL name: measurement" line each; the
# lines are repeated together at the end of the run.

ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(name: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from hetsim.runtime import DEFAULT_MANIFEST, Platform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def platform():
    p = Platform()
    p.config("surf", DEFAULT_MANIFEST)
    return p


@pytest.fixture
def surf_ip(platform):
    return platform.info["SURF_detect"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

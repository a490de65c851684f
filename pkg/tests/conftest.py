import sys

import numpy as np
import pytest

from robinrobin.exact import CosSinMode
from robinrobin.mesh import Horizontal, Slanted, build_mesh
from robinrobin.splitting import build_forms


@pytest.fixture(scope="session")
def sol():
    return CosSinMode(1.0)


@pytest.fixture(scope="session")
def forms4():
    return build_forms(build_mesh(4, Horizontal(0.75)), 1)


@pytest.fixture(scope="session")
def forms8_slanted():
    return build_forms(build_mesh(8, Slanted(0.25, 0.75)), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])

import sys

import numpy as np
import pytest

from rmtlab.ensembles import EnsembleConfig


@pytest.fixture
def goe_small():
    return EnsembleConfig.gaussian(1, 50, seed=7)


@pytest.fixture
def gue_small():
    return EnsembleConfig.gaussian(2, 50, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULT_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

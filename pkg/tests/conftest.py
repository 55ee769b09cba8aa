import sys

import numpy as np
import pytest

from esc_lab.analysis import PracticalSetSpec
from esc_lab.cost import quadratic_shifted
from esc_lab.dynamics import DitherBank
from esc_lab.generators import make_pair


@pytest.fixture
def quad():
    # J(x) = (x - 1)**2 / 2 + 2020 on [-3, 5]
    return quadratic_shifted(center=1.0, curvature=1.0, offset=2020.0, domain=(-3.0, 5.0))


@pytest.fixture
def sd_pair():
    return make_pair("suttner_dashkovskiy")


@pytest.fixture
def gb_pair():
    return make_pair("grushkovskaya_bounded")


@pytest.fixture
def bank():
    return DitherBank(2.0, (1,))


@pytest.fixture
def spec():
    # y0 placed just above its lower bound for kappa = 2, epsilon = 0.5
    return PracticalSetSpec.auto(3.0, 5.0, 0.5, kappa=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    # one PASS/FAIL line per acceptance criterion that ran
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from windgain import dataset, synthgen  # noqa: E402


def small_farm(**over):
    params = dict(seed=3, n_p1=300, n_p2=300)
    params.update(over)
    sc = synthgen.FarmScenario(**params)
    farm = synthgen.generate(sc)
    return sc, farm, dataset.align(farm.ref, farm.ctrb, farm.ctrn, farm.boundary)


@pytest.fixture(scope="session")
def farm_small():
    return small_farm()


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from mmpair.core import ModalityLayout, generate_dataset, make_ground_truth


@pytest.fixture(scope="session")
def layout():
    return ModalityLayout((2, 2, 2))


@pytest.fixture(scope="session")
def gt(layout):
    return make_ground_truth(layout, seed=1)


@pytest.fixture(scope="session")
def ds(layout, gt):
    return generate_dataset(layout, 24, gt, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

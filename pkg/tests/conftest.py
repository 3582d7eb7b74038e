import numpy as np
import pytest
from hypothesis import settings

from amstress.domain import Dataset
from amstress.synth import TruthMap, make_samples

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def nylon_samples():
    return make_samples(TruthMap.default(Dataset.NYLON), seed=0)


@pytest.fixture(scope="session")
def alsi_samples():
    return make_samples(TruthMap.default(Dataset.ALSI10MG), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

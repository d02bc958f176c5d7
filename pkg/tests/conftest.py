import numpy as np
import pytest

from preytaxis.model import ModelParams
from preytaxis.noise import NoiseModel
from preytaxis.spectral import Domain, build_basis


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def basis16():
    return build_basis(Domain.interval(1.0, 128), 16)


@pytest.fixture(scope="session")
def basis2d():
    return build_basis(Domain.rectangle(1.0, 1.0, 64), 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet():
    return NoiseModel(beta0=0.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from morphlab import FaceLoss, Generator, GeneratorConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_generator():
    """16x16, k_local=16, d=32: the desk-scale configuration used across suites."""
    return Generator(GeneratorConfig.small(16))


@pytest.fixture(scope="session")
def tiny_generator():
    """8x8 with a handful of latents, for exhaustive gradient checks."""
    return Generator(GeneratorConfig.small(8, k_local=2, d=4, attention_dim=4, seed=3))


@pytest.fixture(scope="session")
def face_loss():
    return FaceLoss()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_lines(request):
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)

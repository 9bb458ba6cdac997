import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qaoarbm.rbm import RbmState

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_rbm(rng, n, m, scale=0.3) -> RbmState:
    def c(*shape):
        return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))

    return RbmState(c(n), c(m), c(n, m))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

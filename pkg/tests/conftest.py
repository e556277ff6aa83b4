import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def grid_fields(M=None, min_M=4, max_M=64):
    """Hypothesis strategy for grid fields of even size."""
    sizes = st.just(M) if M is not None else st.integers(min_M // 2, max_M // 2).map(lambda k: 2 * k)
    return sizes.flatmap(lambda m: hnp.arrays(np.float64, m, elements=finite))


def coeff_fields(max_N=16):
    return st.integers(1, max_N).flatmap(lambda n: hnp.arrays(np.float64, n + 1, elements=finite))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

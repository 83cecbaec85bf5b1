import numpy as np
import pytest
from hypothesis import strategies as st


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simplex_vectors(k, min_value=0.0):
    """Hypothesis strategy for points of the k-simplex."""
    return (st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)
            .map(lambda w: np.asarray(w) / np.sum(w))
            .filter(lambda p: p.min() >= min_value))


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance PASS/FAIL lines after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

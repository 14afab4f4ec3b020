import numpy as np
import pytest

from deepmf.numerics import RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


def random_symmetric(gen: np.random.Generator, n: int) -> np.ndarray:
    a = gen.normal(size=(n, n))
    return 0.5 * (a + a.T)


def random_psd(gen: np.random.Generator, n: int, p: int | None = None) -> np.ndarray:
    x = gen.normal(size=(n, p or 2 * n))
    return x @ x.T / x.shape[1]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])

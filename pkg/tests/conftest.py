import numpy as np
import pytest

from pwlfit import Signal


def rel_close(a, b, rtol):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


def discrete_corpus(count=50, seed=20240901):
    """Random series, N <= 12, values uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        N = int(rng.integers(1, 13))
        out.append(Signal.discrete(rng.uniform(-1, 1, N + 1)))
    return out


def continuous_corpus(count=20, seed=77):
    """Random piecewise-linear signals on random grids, N <= 11."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        N = int(rng.integers(1, 12))
        t = np.cumsum(rng.uniform(0.1, 2.0, N + 1)) - 1.0
        out.append(Signal.continuous(t, rng.uniform(-1, 1, N + 1)))
    return out


@pytest.fixture(scope="session")
def dcorpus():
    return discrete_corpus()


@pytest.fixture(scope="session")
def ccorpus():
    return continuous_corpus()


@pytest.fixture
def vshape():
    return Signal.discrete([2, 1, 0, 1, 2])

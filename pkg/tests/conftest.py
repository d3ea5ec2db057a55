import numpy as np
import pytest

from mbalance.dataset import Sample


def make_sample(X, T, Y=None, **kw):
    return Sample(np.asarray(X, dtype=float), np.asarray(T), None if Y is None else np.asarray(Y, dtype=float), **kw)


def random_sample(seed, n=60, p=3, shift=0.5, outcome=True):
    rng = np.random.default_rng(seed)
    T = np.zeros(n, dtype=int)
    T[: n // 2] = 1
    rng.shuffle(T)
    X = rng.standard_normal((n, p)) + shift * T[:, None]
    Y = X.sum(axis=1) + T + rng.standard_normal(n) if outcome else None
    return make_sample(X, T, Y)


@pytest.fixture
def toy():
    return random_sample(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from folddiff import Dataset


def make_dataset(rng, n=60, J=4, p=2, zero_frac=0.3):
    """Random zero-heavy dataset whose categories are all estimable."""
    X = rng.normal(size=(n, p))
    A = np.zeros(n)
    A[rng.permutation(n)[: n // 2]] = 1
    W = rng.gamma(2.0, 1.0 + A[:, None], size=(n, J)) * (rng.random((n, J)) > zero_frac)
    for a in (0, 1):
        rows = np.flatnonzero(A == a)
        W[rows[0]] = np.maximum(W[rows[0]], 0.5)
    return Dataset(W, A, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    lines = test_acceptance.RESULTS
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 13):
        terminalreporter.write_line(lines.get(k, f"NOT RUN criterion {k:>2}: deselected, or raised before its check"))

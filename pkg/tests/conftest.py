import numpy as np
import pytest

from wncs.env import make_world
from wncs.plant import SystemMatrices


def scalar_system(a=1.05, b=1.0, c=1.0, w=1.0, v=1.0, q=1.0, r=1.0):
    m = lambda x: np.array([[float(x)]])
    return SystemMatrices(A=m(a), B=m(b), C=m(c), W=m(w), V=m(v), Q=m(q), R=m(r))


def brute_force_matching(w):
    """Best total weight over all partial injective device->channel maps."""
    from itertools import permutations

    n_dev, n_ch = w.shape
    best = 0.0
    # each channel picks a distinct device or nobody (-1)
    devices = list(range(n_dev)) + [-1] * n_ch
    for assign in set(permutations(devices, n_ch)):
        total = sum(w[d, c] for c, d in enumerate(assign) if d >= 0)
        best = max(best, total)
    return best


@pytest.fixture(scope="session")
def world3():
    return make_world(3, 3, 3, 3, seed=0)


@pytest.fixture(scope="session")
def tiny_world():
    return make_world(2, 2, 2, 2, seed=3)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """Record (and print) the verdict for one numbered acceptance criterion."""

    def record(n, ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record

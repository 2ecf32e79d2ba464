import numpy as np
import pytest
from hypothesis import settings, strategies as st

from ccompress.probability import FiniteDist

settings.register_profile("ci", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ci")


@st.composite
def dists(draw, size=None, min_size=1, max_size=8, allow_zero=True):
    n = size if size is not None else draw(st.integers(min_size, max_size))
    w = draw(st.lists(st.floats(0.0 if allow_zero else 0.01, 1.0), min_size=n, max_size=n))
    if sum(w) == 0:
        w[0] = 1.0
    return FiniteDist.normalized(tuple(range(n)), w)


@st.composite
def dist_pairs(draw, max_size=8, full_q=True):
    """(P, Q) on one alphabet with S(P||Q) finite."""
    n = draw(st.integers(1, max_size))
    p = draw(dists(size=n))
    q = draw(dists(size=n, allow_zero=not full_q))
    return p, q


def rand_dist(rng, n, zero_frac=0.0):
    w = rng.dirichlet(np.ones(n))
    if zero_frac:
        w[rng.random(n) < zero_frac] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
    return FiniteDist.normalized(tuple(range(n)), w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from genrbf.data import Dataset  # noqa: E402
from genrbf.density import GaussianModel  # noqa: E402
from genrbf.representation import PointRepresentation, condition  # noqa: E402
from genrbf.subspace import from_mask  # noqa: E402
from oracles import random_spd  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rep(rng, N, kind=None) -> PointRepresentation:
    """Conditioned representation with a random mask; ``kind`` forces
    'dirac', 'full' or 'partial'."""
    S = random_spd(rng, N)
    m = rng.normal(size=N)
    x = rng.normal(size=N)
    if kind == "dirac":
        mask = np.zeros(N, bool)
    elif kind == "full":
        mask = np.ones(N, bool)
    elif kind == "partial" and N > 1:
        k = int(rng.integers(1, N))
        mask = np.zeros(N, bool)
        mask[rng.choice(N, k, replace=False)] = True
    else:
        mask = rng.random(N) < 0.5
    return condition(GaussianModel(m, S), from_mask(x, mask))


def random_incomplete(rng, M, N, p, min_per_class=2) -> Dataset:
    X = rng.normal(size=(M, N)) @ rng.normal(size=(N, N))
    y = np.where(rng.random(M) < 0.5, 1, -1)
    y[:min_per_class] = 1
    y[min_per_class:2 * min_per_class] = -1
    miss = rng.random((M, N)) < p
    # keep every feature observed at least once
    for j in range(N):
        if miss[:, j].all():
            miss[rng.integers(M), j] = False
    return Dataset(X, miss, y)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from exgeo.covariance import make_gaussian_cov
from exgeo.fieldsim import Grid, simulate


@pytest.fixture(scope="session")
def gauss1():
    return make_gaussian_cov(1)


@pytest.fixture(scope="session")
def gauss2():
    return make_gaussian_cov(2)


@pytest.fixture(scope="session")
def field_batch_1d(gauss1):
    """500 independent 1-d samples on [-10, 10] at h = 0.1 (shared across
    statistical tests to keep the suite fast)."""
    grid = Grid.for_window(1, 0.1, 10)
    return grid, [simulate(gauss1, grid, 1000 + r) for r in range(500)]

import numpy as np
import pytest

from neuradr import Field, make_uniform_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.fixture
def grid16():
    return make_uniform_grid(16, 1.0)


def field_of(grid, values):
    return Field(grid, np.asarray(values, dtype=float))

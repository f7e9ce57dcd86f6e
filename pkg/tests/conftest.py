import numpy as np
import pytest

from coordkit import StrictInstance

EXAMPLE_U = [0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1]
EXAMPLE_X = [0, 1, 1, 1, 0, 0, 1, 0, 0, 1, 0, 1]
EXAMPLE_V = [0, 0, 0, 1, 1, 0, 1, 0, 0, 1, 1, 1]


def example_target() -> np.ndarray:
    t = np.full((2, 2, 2), 1.0 / 6.0)
    t[0, 0, 0] = t[1, 1, 1] = 0.5
    return t


def random_binary_instance(rng, channel=None, ny=2):
    source = rng.dirichlet(np.ones(2))
    target = rng.dirichlet(np.ones(4), size=2).reshape(2, 2, 2)
    if channel is None:
        channel = rng.dirichlet(np.ones(ny), size=2)
    return StrictInstance.from_arrays(source, channel, target)


@pytest.fixture
def example_instance():
    return StrictInstance.from_arrays(np.array([0.5, 0.5]), np.eye(2), example_target())

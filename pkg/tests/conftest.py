import numpy as np
import pytest

from regretrl.fixtures import build_cliff_grid, build_twolane


@pytest.fixture
def twolane():
    return build_twolane()


@pytest.fixture
def cliff():
    return build_cliff_grid(4, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

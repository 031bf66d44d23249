import numpy as np
import pytest

from phipsim.spin import PYRUVATE


@pytest.fixture
def params():
    return PYRUVATE


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import numpy as np
import pytest

from qoidesign.models import PAIRWISE_GD_MATRIX, LinearMapModel


@pytest.fixture
def linear_model():
    return LinearMapModel(PAIRWISE_GD_MATRIX)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

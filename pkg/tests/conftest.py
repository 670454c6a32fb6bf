import numpy as np
import pytest
from hypothesis import settings

# fixed example sequence: the suite gives the same verdict on every run
settings.register_profile("deterministic", derandomize=True, deadline=None)
settings.load_profile("deterministic")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_se(est, target, k=5.0):
    return abs(est.value - target) <= k * est.std_error

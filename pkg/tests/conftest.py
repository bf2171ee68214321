import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("amdl", max_examples=60, deadline=None)
settings.load_profile("amdl")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n):
    g = rng.standard_normal((n, n))
    return g @ g.T + n * np.eye(n)

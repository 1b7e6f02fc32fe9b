import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ttinv.core import TTTensor

settings.register_profile(
    "ci", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")


def random_tt(rng, modes, max_rank=3, complex=False):
    d = len(modes)
    ranks = (1,) + tuple(int(rng.integers(1, max_rank + 1)) for _ in range(d - 1)) + (1,)
    return TTTensor.random(modes, ranks, rng, complex=complex)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

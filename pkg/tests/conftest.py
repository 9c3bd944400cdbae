import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_rotation_angles(rng):
    return tuple(rng.uniform(0, 2 * np.pi, 3) * np.array([1.0, 0.5, 1.0]))

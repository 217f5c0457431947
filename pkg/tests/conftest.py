import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def channel(rng):
    """A generic M=32, K=4 channel with unequal column norms."""
    return crandn(rng, 32, 4) / np.sqrt(32) * np.sqrt([1.0, 0.5, 2.0, 0.8])

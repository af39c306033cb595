import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from beltrami.grid import make_grid, sample

settings.register_profile(
    "beltrami", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("beltrami")


def rel_l2(a, b, region=None):
    """Relative L2 gap of two sample arrays (optionally on a mask)."""
    a, b = np.asarray(a), np.asarray(b)
    if region is not None:
        a, b = a[region], b[region]
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) / np.sum(np.abs(b) ** 2)))


def disk_indicator(grid, radius=1.0):
    return sample(lambda z: (np.abs(z) < radius).astype(float), grid)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(4.0, 64)


@pytest.fixture(scope="session")
def grid512():
    return make_grid(4.0, 512)

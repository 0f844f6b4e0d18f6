import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "carlemanlab", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("carlemanlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def f_sigma_points(mode, n, f_values, sigma_values, polar=(0.7, 1.9), azimuth=(0.3,)):
    from carlemanlab.modes import f_sigma_grid

    angles = [np.asarray(polar)] * (n - 2) + [np.asarray(azimuth)]
    return f_sigma_grid(mode, n, f_values, sigma_values, angles)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_path(dicts, j, gain, tau0=0.0, rx_facing=-1, tx_facing=1):
    """A path whose parameters sit exactly on the dictionary grid point ``j``."""
    from momp.paths import PathParams

    g = [grid[jk] for grid, jk in zip(dicts.grids, j)]
    doa = np.array([g[0], g[1], rx_facing * np.sqrt(1 - g[0] ** 2 - g[1] ** 2)])
    dod = np.array([g[2], g[3], tx_facing * np.sqrt(1 - g[2] ** 2 - g[3] ** 2)])
    return PathParams(gain, doa, dod, tau0 + g[4])


TINY_TUPLES = [(8, 8, 4, 4, 0), (3, 11, 1, 6, 10), (13, 5, 6, 2, 20)]
TINY_GAINS = [1.0, 0.5j, -0.3]

import numpy as np
import pytest

from faao.scenario import default_scenario


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def low_snr():
    """Short unsaturated variant: rates sit well below their 2-bit ceiling."""
    return default_scenario().replace(horizon_T=4.0, uav_start=(100.0, 250.0), uav_end=(250.0, 100.0),
                                      noise_power_dbm_hop1=-80.0, noise_power_dbm_hop2=-80.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

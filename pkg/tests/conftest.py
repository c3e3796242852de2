import numpy as np
import pytest


def fd_grad(fn, x, h=1e-6):
    """Central finite-difference gradient of scalar fn at x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

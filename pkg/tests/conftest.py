"""Shared helpers: random fixtures and a finite-difference oracle."""

import numpy as np
import pytest

from landsr.raster import BandRaster, MultispectralScene

BAND_IDS = ("B1", "B2", "B3", "B4", "B5", "B7")


def rand_band(rng, height, width, band_id="B1"):
    return BandRaster(band_id, rng.uniform(0.0, 1.0, size=(height, width)))


def rand_scene(rng, height, width, n_bands=6):
    return MultispectralScene(
        [rand_band(rng, height, width, BAND_IDS[i]) for i in range(n_bands)]
    )


def fd_gradient(fn, x, h=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return grad


def rel_err(analytic, numeric):
    """Max elementwise relative error with an absolute guard near zero."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(42)

import numpy as np
import pytest

from sflx import BackgroundColor, Raster, make_rng


@pytest.fixture
def bg1():
    return BackgroundColor.black(1)


@pytest.fixture
def gray22():
    return Raster(2, 2, 1, np.array([10, 20, 30, 40], dtype=np.uint8))


@pytest.fixture
def bright(request):
    """Factory for all-bright gray rasters (every pixel differs from black)."""

    def make(width, height, value=200):
        return Raster(width, height, 1, np.full(width * height, value, dtype=np.uint8))

    return make


def random_raster(seed, width, height, channels=1, lo=1, hi=256):
    rng = make_rng(seed)
    data = rng.integers(lo, hi, width * height * channels).astype(np.uint8)
    return Raster(width, height, channels, data)

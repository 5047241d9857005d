import numpy as np
import pytest

from regtrack import am as am_mod
from regtrack import eval as eval_mod
from regtrack import ssm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def base_image():
    return eval_mod.textured_image(200, 260, seed=3)


@pytest.fixture(scope="session")
def box():
    return ssm.corners_from_rect(80.0, 60.0, 80.0, 80.0)


def quantize_to_bin_centers(img, nbins=8):
    """Snap intensities to soft-bin center values (exact stationarity for
    histogram models when sampled on integer-aligned grids)."""
    scale = am_mod.bin_scale(nbins)
    return np.rint(img * scale) / scale


@pytest.fixture(scope="session")
def quantized_image():
    return quantize_to_bin_centers(eval_mod.textured_image(200, 260, seed=3))


def separated_patch(rng, n, nbins=16, levels=(3, 8, 13)):
    """Random patch whose values sit on well-separated bin centers."""
    scale = am_mod.bin_scale(nbins)
    return rng.choice(np.asarray(levels, dtype=np.float64), size=n) / scale

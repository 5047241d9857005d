"""Backend equivalence: the compiled kernels and the numpy fallback must
agree exactly, since either may be selected at import time."""

import numpy as np
import pytest

from regtrack._kernels import BACKEND, fallback

try:
    from regtrack._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None,
                                reason="compiled kernels not built")


@pytest.fixture
def data(rng):
    img = np.ascontiguousarray(rng.uniform(0, 255, (37, 53)))
    xs = rng.uniform(-10, 63, 400)
    ys = rng.uniform(-10, 47, 400)
    return img, xs, ys


def test_backend_reported():
    assert BACKEND in ("compiled", "python")


@needs_core
def test_sample_backends_identical(data):
    img, xs, ys = data
    a = _core.bilinear_sample(img, xs, ys)
    b = fallback.bilinear_sample(img, xs, ys)
    np.testing.assert_array_equal(a, b)


@needs_core
def test_gradient_backends_identical(data):
    img, xs, ys = data
    va, dxa, dya = _core.bilinear_sample_grad(img, xs, ys, 0.5)
    vb, dxb, dyb = fallback.bilinear_sample_grad(img, xs, ys, 0.5)
    np.testing.assert_array_equal(va, vb)
    np.testing.assert_array_equal(dxa, dxb)
    np.testing.assert_array_equal(dya, dyb)


def test_fallback_lattice_and_midpoint():
    img = np.zeros((8, 8))
    img[5, 3] = 10.0
    img[5, 4] = 20.0
    out = fallback.bilinear_sample(img, np.array([3.0, 3.5]),
                                   np.array([5.0, 5.0]))
    assert out[0] == 10.0
    assert out[1] == 15.0


def test_fallback_clamps_to_border_pixel():
    img = np.arange(24, dtype=np.float64).reshape(4, 6)
    out = fallback.bilinear_sample(img, np.array([-4.2, 100.0]),
                                   np.array([-7.9, 100.0]))
    assert out[0] == img[0, 0]
    assert out[1] == img[3, 5]

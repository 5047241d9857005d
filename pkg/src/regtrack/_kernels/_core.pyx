# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bilinear sampling kernels.

These are the hot inner loops of tracking: every search-method iteration
resamples the candidate patch (and usually its gradient) at a few thousand
sub-pixel locations. The pure-python fallback in ``fallback.py`` implements
the same formulas with the same operation order, so both backends agree to
the last bit on the same inputs.
"""

import numpy as np


cdef inline double _bilinear(const double[:, ::1] img, double x, double y) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t x0, y0
    cdef double fx, fy, top, bot
    # clamp to the border pixel coordinates, then interpolate
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>x
    y0 = <Py_ssize_t>y
    if x0 > w - 2:
        x0 = w - 2
    if y0 > h - 2:
        y0 = h - 2
    fx = x - <double>x0
    fy = y - <double>y0
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x0 + 1]
    bot = (1.0 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bot


def bilinear_sample(const double[:, ::1] img, const double[::1] xs,
                    const double[::1] ys):
    """Sample ``img`` at sub-pixel points, clamping to the border."""
    cdef Py_ssize_t n = xs.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            o[k] = _bilinear(img, xs[k], ys[k])
    return out


def bilinear_sample_grad(const double[:, ::1] img, const double[::1] xs,
                         const double[::1] ys, double delta):
    """Sample values plus central-difference gradients of the interpolant.

    Returns (values, dx, dy) with dx = (I(x+d,y) - I(x-d,y)) / (2d) and the
    same clamped bilinear interpolant used by :func:`bilinear_sample`.
    """
    cdef Py_ssize_t n = xs.shape[0]
    val = np.empty(n, dtype=np.float64)
    gx = np.empty(n, dtype=np.float64)
    gy = np.empty(n, dtype=np.float64)
    cdef double[::1] v = val
    cdef double[::1] dx = gx
    cdef double[::1] dy = gy
    cdef double inv = 1.0 / (2.0 * delta)
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            v[k] = _bilinear(img, xs[k], ys[k])
            dx[k] = (_bilinear(img, xs[k] + delta, ys[k])
                     - _bilinear(img, xs[k] - delta, ys[k])) * inv
            dy[k] = (_bilinear(img, xs[k], ys[k] + delta)
                     - _bilinear(img, xs[k], ys[k] - delta)) * inv
    return val, gx, gy

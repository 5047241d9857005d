"""Pure-numpy implementations of the sampling kernels.

Mirrors ``_core.pyx`` exactly: same clamping rule, same operation order,
so results agree with the compiled backend bit for bit.
"""

import numpy as np


def bilinear_sample(img, xs, ys):
    h, w = img.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(x.astype(np.int64), w - 2)
    y0 = np.minimum(y.astype(np.int64), h - 2)
    fx = x - x0
    fy = y - y0
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x0 + 1]
    bot = (1.0 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bot


def bilinear_sample_grad(img, xs, ys, delta):
    inv = 1.0 / (2.0 * delta)
    val = bilinear_sample(img, xs, ys)
    dx = (bilinear_sample(img, xs + delta, ys)
          - bilinear_sample(img, xs - delta, ys)) * inv
    dy = (bilinear_sample(img, xs, ys + delta)
          - bilinear_sample(img, xs, ys - delta)) * inv
    return val, dx, dy

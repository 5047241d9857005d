"""Image representation, smoothing, sub-pixel patch sampling and gradients.

Images are plain ``float64`` 2-d numpy arrays with intensities in [0, 255].
Patch coordinates live on a :class:`SampleGrid`, an ordered (row-major) set
of sub-pixel points; the grid used by trackers spans the centered unit
square [-0.5, 0.5]^2 and is mapped into the image by the warp. All
functions here are pure; arrays should be treated as immutable once built.
"""

import os

import numpy as np
from scipy import ndimage

from . import _kernels

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageError(ValueError):
    pass


def as_gray_image(data):
    """Validate and convert to a float64 grayscale image array."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ImageError(f"expected a 2-d array, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ImageError(f"image too small: {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageError("image contains non-finite values")
    return img


def rgb_to_gray(rgb):
    """Standard luminance weighting of an (H, W, 3) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise ImageError(f"expected an (H, W, 3) array, got {rgb.shape}")
    r, g, b = LUMA_WEIGHTS
    return rgb[:, :, 0] * r + rgb[:, :, 1] * g + rgb[:, :, 2] * b


def gaussian_kernel(kernel_size=5, sigma=None):
    """1-d unit-sum Gaussian kernel.

    When ``sigma`` is None it is derived from the size by the usual
    convention ``0.3 * ((size - 1) / 2 - 1) + 0.8``.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {kernel_size}")
    if sigma is None:
        sigma = 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = (kernel_size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(img, kernel_size=5, sigma=None):
    """Separable Gaussian smoothing with border replication."""
    img = as_gray_image(img)
    k = gaussian_kernel(kernel_size, sigma)
    if kernel_size == 1:
        return img.copy()
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


class SampleGrid:
    """Ordered row-major set of sub-pixel sample points.

    Parameters
    ----------
    points : (N, 2) array of (x, y) coordinates
    resolution : (nx, ny) with N = nx * ny
    """

    def __init__(self, points, resolution):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ValueError(f"bad point array shape {pts.shape}")
        nx, ny = resolution
        if nx * ny != pts.shape[0]:
            raise ValueError(f"resolution {resolution} does not match "
                             f"{pts.shape[0]} points")
        self.points = pts
        self.resolution = (int(nx), int(ny))

    @classmethod
    def unit(cls, nx=50, ny=None):
        """Regular grid over the centered unit square [-0.5, 0.5]^2."""
        if ny is None:
            ny = nx
        xs = np.linspace(-0.5, 0.5, nx)
        ys = np.linspace(-0.5, 0.5, ny)
        gx, gy = np.meshgrid(xs, ys)
        return cls(np.column_stack([gx.ravel(), gy.ravel()]), (nx, ny))

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.points.shape[0]


def _point_columns(pts):
    pts = np.asarray(pts, dtype=np.float64)
    xs = np.ascontiguousarray(pts[:, 0])
    ys = np.ascontiguousarray(pts[:, 1])
    return xs, ys


def _grid_points(grid):
    return grid.points if isinstance(grid, SampleGrid) else np.asarray(grid, dtype=np.float64)


def sample_patch(img, grid):
    """Bilinear sampling of ``img`` at grid points, clamped at borders."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    xs, ys = _point_columns(_grid_points(grid))
    return _kernels.bilinear_sample(img, xs, ys)


def image_gradient(img, grid, delta=0.5):
    """Central differences of the bilinear interpolant at grid points.

    Returns (dx, dy), each aligned with the sampled patch.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    xs, ys = _point_columns(_grid_points(grid))
    _, dx, dy = _kernels.bilinear_sample_grad(img, xs, ys, delta)
    return dx, dy


def sample_with_gradient(img, grid, delta=0.5):
    """Fused value + gradient sampling (one pass over the hot kernel)."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    xs, ys = _point_columns(_grid_points(grid))
    return _kernels.bilinear_sample_grad(img, xs, ys, delta)


def read_pgm(path):
    """Read an 8-bit PGM (P2 or P5) file, bit-exact."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    i = 0
    # tokenize the header, honoring '#' comments
    while len(tokens) < 4 and i < len(data):
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4:
        raise ImageError(f"truncated PGM header in {path}")
    magic, w_s, h_s, maxval_s = tokens[:4]
    if magic not in (b"P2", b"P5"):
        raise ImageError(f"not a PGM file: {path}")
    w, h, maxval = int(w_s), int(h_s), int(maxval_s)
    if maxval <= 0 or maxval > 255:
        raise ImageError(f"unsupported PGM maxval {maxval}")
    if magic == b"P5":
        i += 1  # single whitespace after maxval
        raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=i)
    else:
        values = data[i:].split()
        if len(values) < w * h:
            raise ImageError(f"truncated PGM raster in {path}")
        raster = np.array(values[:w * h], dtype=np.uint8)
    return as_gray_image(raster.reshape(h, w))


def write_pgm(path, img):
    """Write an 8-bit binary PGM; intensities are rounded and clipped."""
    img = as_gray_image(img)
    raster = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def load_image(path):
    """Load a grayscale image from disk.

    PGM is handled natively (bit-exact); other formats go through Pillow
    when available, with RGB converted by the standard luminance weights.
    """
    path = os.fspath(path)
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise ImageError(
            f"cannot read {path}: only PGM is supported without pillow"
        ) from exc
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            return as_gray_image(np.asarray(im.convert("L"), dtype=np.float64))
        return as_gray_image(rgb_to_gray(np.asarray(im.convert("RGB"),
                                                    dtype=np.float64)))

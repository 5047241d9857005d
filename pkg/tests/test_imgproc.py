import numpy as np
import pytest

from regtrack import imgproc
from regtrack.imgproc import (SampleGrid, gaussian_kernel, gaussian_smooth,
                              image_gradient, read_pgm, rgb_to_gray,
                              sample_patch, sample_with_gradient, write_pgm)


class TestGaussianSmooth:
    def test_constant_image_preserved(self):
        img = np.full((12, 15), 7.0)
        np.testing.assert_allclose(gaussian_smooth(img), img, atol=1e-12)

    def test_size_one_is_identity(self, rng):
        img = rng.uniform(0, 255, (9, 11))
        np.testing.assert_array_equal(gaussian_smooth(img, kernel_size=1), img)

    def test_impulse_matches_kernel_weights(self):
        img = np.zeros((11, 11))
        img[5, 5] = 100.0
        out = gaussian_smooth(img, kernel_size=5)
        k = gaussian_kernel(5)
        k2d = np.outer(k, k)
        assert out[5, 5] == pytest.approx(100.0 * k2d[2, 2], abs=1e-12)
        assert out.sum() == pytest.approx(100.0, abs=1e-9)
        np.testing.assert_allclose(out[3:8, 3:8], 100.0 * k2d, atol=1e-12)

    def test_interior_mean_preserved(self, rng):
        img = rng.uniform(0, 255, (40, 40))
        out = gaussian_smooth(img, kernel_size=5)
        # discrepancy only from borders; compare means away from them
        assert abs(out[4:-4, 4:-4].mean()
                   - gaussian_smooth(img, 1).astype(float)[4:-4, 4:-4].mean()) < 1.0
        # unit kernel sum is what actually guarantees it
        assert gaussian_kernel(5).sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_even_kernel(self):
        with pytest.raises(ValueError):
            gaussian_smooth(np.zeros((5, 5)), kernel_size=4)

    def test_rejects_tiny_image(self):
        with pytest.raises(imgproc.ImageError):
            gaussian_smooth(np.zeros((1, 5)))


class TestSamplePatch:
    def test_integer_pixel(self):
        img = np.arange(48, dtype=np.float64).reshape(6, 8)
        grid = np.array([[3.0, 5.0]])
        assert sample_patch(img, grid)[0] == img[5, 3]

    def test_midpoint(self):
        img = np.zeros((8, 8))
        img[5, 3], img[5, 4] = 10.0, 20.0
        assert sample_patch(img, np.array([[3.5, 5.0]]))[0] == 15.0

    def test_out_of_bounds_clamps(self):
        img = np.arange(30, dtype=np.float64).reshape(5, 6)
        got = sample_patch(img, np.array([[-4.2, -7.9]]))[0]
        assert got == img[0, 0]

    def test_continuity(self, rng):
        img = rng.uniform(0, 255, (20, 20))
        pts = rng.uniform(1, 18, (50, 2))
        eps = 1e-4
        v0 = sample_patch(img, pts)
        lipschitz = np.ptp(img)  # crude bound on local variation / pixel
        for d in (np.array([eps, 0.0]), np.array([0.0, eps])):
            v1 = sample_patch(img, pts + d)
            assert np.abs(v1 - v0).max() <= lipschitz * eps + 1e-12


class TestImageGradient:
    def test_linear_ramp_exact(self):
        ys, xs = np.mgrid[0:20, 0:20]
        img = 3.0 * xs + 4.0 * ys
        pts = np.array([[5.2, 7.7], [10.0, 10.0], [3.5, 12.25]])
        dx, dy = image_gradient(img, pts)
        np.testing.assert_allclose(dx, 3.0, atol=1e-9)
        np.testing.assert_allclose(dy, 4.0, atol=1e-9)

    def test_constant_zero(self):
        img = np.full((10, 10), 42.0)
        dx, dy = image_gradient(img, np.array([[4.3, 5.1]]))
        assert dx[0] == 0.0 and dy[0] == 0.0

    def test_quadratic_central_difference_exact(self):
        xs = np.arange(25, dtype=np.float64)
        img = np.tile(xs * xs, (5, 1))
        dx, _ = image_gradient(img, np.array([[10.0, 2.0]]))
        assert dx[0] == pytest.approx(20.0, abs=1e-6)

    def test_matches_forward_differences_on_smooth_image(self):
        ys, xs = np.mgrid[0:60, 0:60]
        img = 100 + 60 * np.sin(0.05 * xs) * np.cos(0.06 * ys)
        pts = np.array([[12.3, 17.8], [30.0, 30.5], [8.25, 44.0]])
        dx, dy = image_gradient(img, pts)
        fdx = (sample_patch(img, pts + [0.5, 0]) - sample_patch(img, pts)) / 0.5
        fdy = (sample_patch(img, pts + [0, 0.5]) - sample_patch(img, pts)) / 0.5
        # the schemes differ by (delta/2) I'' + O(delta^2); bound via curvature
        bound = 0.25 * 60 * 0.06 ** 2 + 1e-3
        assert np.abs(dx - fdx).max() < bound
        assert np.abs(dy - fdy).max() < bound

    def test_fused_sampler_consistent(self, rng):
        img = rng.uniform(0, 255, (15, 15))
        pts = rng.uniform(0, 14, (30, 2))
        v, dx, dy = sample_with_gradient(img, pts)
        np.testing.assert_array_equal(v, sample_patch(img, pts))
        dx2, dy2 = image_gradient(img, pts)
        np.testing.assert_array_equal(dx, dx2)
        np.testing.assert_array_equal(dy, dy2)


class TestSampleGrid:
    def test_unit_grid_row_major(self):
        g = SampleGrid.unit(3, 2)
        assert g.resolution == (3, 2)
        np.testing.assert_allclose(
            g.points,
            [[-0.5, -0.5], [0.0, -0.5], [0.5, -0.5],
             [-0.5, 0.5], [0.0, 0.5], [0.5, 0.5]])

    def test_resolution_mismatch_rejected(self):
        with pytest.raises(ValueError):
            SampleGrid(np.zeros((5, 2)), (2, 2))


class TestImageIO:
    def test_pgm_round_trip_bit_exact(self, tmp_path, rng):
        img = np.floor(rng.uniform(0, 256, (9, 13)))
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        np.testing.assert_array_equal(read_pgm(path), img)
        # a second write of the read image is byte-identical
        path2 = tmp_path / "img2.pgm"
        write_pgm(path2, read_pgm(path))
        assert path.read_bytes() == path2.read_bytes()

    def test_pgm_ascii(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_text("P2\n# comment\n3 2\n255\n0 10 20\n30 40 50\n")
        np.testing.assert_array_equal(read_pgm(path),
                                      [[0, 10, 20], [30, 40, 50]])

    def test_luminance_weights(self):
        rgb = np.zeros((2, 2, 3))
        rgb[..., 0] = 100.0
        assert rgb_to_gray(rgb)[0, 0] == pytest.approx(29.9)
        rgb = np.full((2, 2, 3), 100.0)
        assert rgb_to_gray(rgb)[0, 0] == pytest.approx(100.0)

    def test_load_image_pgm(self, tmp_path):
        img = np.arange(12, dtype=np.float64).reshape(3, 4)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        np.testing.assert_array_equal(imgproc.load_image(path), img)

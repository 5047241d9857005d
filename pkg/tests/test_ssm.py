import numpy as np
import pytest

from regtrack import ssm
from regtrack.ssm import (CANONICAL_CORNERS, DegenerateWarpError, SL3_BASIS,
                          SingularWarpError, apply_warp, corners_degenerate,
                          expm_fixed, fit_params, invert_params, make_model,
                          model_names, parse_corners, format_corners,
                          sample_warp, update_params, warp_jacobian)

ALL_MODELS = model_names()
HOM_MODELS = ["hom-matrix", "hom-sl3", "hom-corner"]


def series_expm(a, terms=80):
    """Brute-force Taylor series oracle for the matrix exponential."""
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def random_params(model, rng, scale=0.08):
    return model.sample(scale, rng)


class TestExpm:
    def test_matches_series_oracle(self, rng):
        for _ in range(20):
            a = rng.normal(0, 0.4, (3, 3))
            np.testing.assert_allclose(expm_fixed(a), series_expm(a),
                                       rtol=1e-12, atol=1e-12)

    def test_matches_scipy(self, rng):
        from scipy.linalg import expm
        a = rng.normal(0, 1.0, (6, 6))
        np.testing.assert_allclose(expm_fixed(a), expm(a), rtol=1e-9,
                                   atol=1e-9)


class TestApplyWarp:
    @pytest.mark.parametrize("name", ALL_MODELS)
    def test_identity(self, name, rng):
        m = make_model(name)
        pts = rng.uniform(-0.5, 0.5, (20, 2))
        np.testing.assert_allclose(apply_warp(m, m.identity(), pts), pts,
                                   atol=1e-12)

    def test_translation_example(self):
        m = make_model("translation")
        out = apply_warp(m, np.array([3.0, -2.0]), np.array([[10.0, 10.0]]))
        np.testing.assert_allclose(out, [[13.0, 8.0]])

    @pytest.mark.parametrize("gen", range(8))
    def test_sl3_generator_matches_series_exponential(self, gen):
        eps = 1e-2
        m_sl3 = make_model("hom-sl3")
        m_mat = make_model("hom-matrix")
        p = np.zeros(8)
        p[gen] = eps
        h = series_expm(eps * SL3_BASIS[gen])
        q = m_mat.from_matrix(h / h[2, 2])
        a = apply_warp(m_sl3, p, CANONICAL_CORNERS)
        b = apply_warp(m_mat, q, CANONICAL_CORNERS)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_singular_projective_denominator(self):
        m = make_model("hom-matrix")
        p = np.zeros(8)
        p[6] = 2.0  # denominator 1 + 2x hits -1 + 2*... at x = -0.5
        with pytest.raises(SingularWarpError):
            apply_warp(m, p, np.array([[-0.5, 0.0]]))


class TestUpdateParams:
    @pytest.mark.parametrize("name", ALL_MODELS)
    @pytest.mark.parametrize("mode", ["additive", "compositional",
                                      "inverse-compositional"])
    def test_zero_delta_is_noop(self, name, mode, rng):
        m = make_model(name)
        p = random_params(m, rng)
        np.testing.assert_allclose(update_params(m, p, m.identity(), mode),
                                   p, atol=1e-12)

    def test_translation_modes_coincide(self, rng):
        m = make_model("translation")
        p, dp = rng.normal(0, 1, 2), rng.normal(0, 1, 2)
        add = update_params(m, p, dp, "additive")
        comp = update_params(m, p, dp, "compositional")
        invc = update_params(m, p, -dp, "inverse-compositional")
        np.testing.assert_allclose(add, comp, atol=1e-12)
        np.testing.assert_allclose(add, invc, atol=1e-12)

    def test_hom_composition_matches_two_step_application(self, rng):
        m = make_model("hom-matrix")
        for _ in range(100):
            p, dp = random_params(m, rng), random_params(m, rng)
            x = rng.uniform(-0.5, 0.5, (1, 2))
            lhs = apply_warp(m, update_params(m, p, dp, "compositional"), x)
            rhs = apply_warp(m, p, apply_warp(m, dp, x))
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestWarpJacobian:
    def test_translation_is_identity(self, rng):
        m = make_model("translation")
        jac = warp_jacobian(m, rng.normal(0, 1, 2), np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(jac[0], np.eye(2))

    def test_similitude_at_identity(self):
        m = make_model("similitude")
        jac = warp_jacobian(m, m.identity(), np.array([[2.0, 5.0]]))[0]
        np.testing.assert_allclose(jac[:, 0], [1, 0])
        np.testing.assert_allclose(jac[:, 1], [0, 1])
        np.testing.assert_allclose(jac[:, 2], [2, 5])    # scale column
        np.testing.assert_allclose(jac[:, 3], [-5, 2])   # rotation column

    def test_sl3_identity_is_generator_action(self):
        m = make_model("hom-sl3")
        pts = np.array([[0.3, -0.2]])
        jac = warp_jacobian(m, m.identity(), pts)[0]
        x, y = pts[0]
        for i, g in enumerate(SL3_BASIS):
            num = g @ np.array([x, y, 1.0])
            expected = np.array([num[0] - x * num[2], num[1] - y * num[2]])
            np.testing.assert_allclose(jac[:, i], expected, atol=1e-12)

    @pytest.mark.parametrize("name", ALL_MODELS)
    def test_matches_finite_differences(self, name, rng):
        m = make_model(name)
        step = 1e-6
        for trial in range(12):
            p = m.identity() if trial == 0 else random_params(m, rng)
            pts = rng.uniform(-0.5, 0.5, (5, 2))
            jac = warp_jacobian(m, p, pts)
            for i in range(m.dof):
                dp = np.zeros(m.dof)
                dp[i] = step
                fd = (apply_warp(m, p + dp, pts)
                      - apply_warp(m, p - dp, pts)) / (2 * step)
                scale = max(np.abs(fd).max(), 1.0)
                assert np.abs(jac[:, :, i] - fd).max() < 1e-4 * scale


class TestInvertParams:
    @pytest.mark.parametrize("name", ALL_MODELS)
    def test_identity_inverts_to_identity(self, name):
        m = make_model(name)
        np.testing.assert_allclose(invert_params(m, m.identity()),
                                   m.identity(), atol=1e-12)

    def test_translation(self):
        m = make_model("translation")
        np.testing.assert_allclose(invert_params(m, np.array([3.0, -2.0])),
                                   [-3.0, 2.0])

    def test_hom_round_trip(self, rng):
        m = make_model("hom-matrix")
        for _ in range(50):
            p = random_params(m, rng)
            back = apply_warp(m, invert_params(m, p),
                              apply_warp(m, p, CANONICAL_CORNERS))
            assert np.abs(back - CANONICAL_CORNERS).max() < 1e-9


class TestFitParams:
    def test_similitude_exact_recovery(self, rng):
        m = make_model("similitude")
        q = np.array([0.2, -0.1, 0.05, 0.3])
        src = CANONICAL_CORNERS
        dst = apply_warp(m, q, src)
        np.testing.assert_allclose(fit_params(m, src, dst), q, atol=1e-9)

    def test_homography_exact_for_four_points(self, rng):
        m = make_model("hom-matrix")
        for _ in range(25):
            src = CANONICAL_CORNERS
            dst = CANONICAL_CORNERS + rng.normal(0, 0.1, (4, 2))
            if corners_degenerate(dst):
                continue
            p = fit_params(m, src, dst)
            assert np.abs(apply_warp(m, p, src) - dst).max() < 1e-9

    def test_translation_fit_is_mean_displacement(self, rng):
        m = make_model("translation")
        src = CANONICAL_CORNERS * 100
        noise = rng.normal(0, 2.0, (4, 2))
        t_true = np.array([5.0, -3.0])
        dst = src + t_true + noise
        p = fit_params(m, src, dst)
        np.testing.assert_allclose(p, t_true + noise.mean(axis=0), atol=1e-12)
        # brute-force optimality over random candidates
        def residual(t):
            return np.sum((src + t - dst) ** 2)
        best = residual(p)
        for _ in range(1000):
            assert best <= residual(p + rng.normal(0, 2.0, 2)) + 1e-12

    def test_degenerate_corners_rejected(self):
        m = make_model("hom-matrix")
        collinear = np.array([[0.0, 0], [1, 0], [2, 0], [3, 0]])
        with pytest.raises(ssm.WarpError):
            fit_params(m, collinear, CANONICAL_CORNERS)


class TestSampleWarp:
    @pytest.mark.parametrize("name", ALL_MODELS)
    def test_small_sigma_near_identity(self, name, rng):
        m = make_model(name)
        p = sample_warp(m, 1e-9, rng)
        moved = apply_warp(m, p, CANONICAL_CORNERS)
        assert np.abs(moved - CANONICAL_CORNERS).max() < 1e-6

    def test_translation_marginal_std(self):
        rng = np.random.default_rng(7)
        m = make_model("translation")
        sigma = 0.05
        draws = np.array([sample_warp(m, sigma, rng) for _ in range(100000)])
        # mean of 4 i.i.d. corner draws per coordinate -> std sigma / 2
        expected = sigma / 2.0
        for axis in range(2):
            assert abs(draws[:, axis].std() - expected) < 0.05 * expected

    def test_hom_corner_params_equal_perturbation(self):
        rng = np.random.default_rng(11)
        m = make_model("hom-corner")
        p = sample_warp(m, 0.05, rng)
        warped = apply_warp(m, p, CANONICAL_CORNERS)
        np.testing.assert_allclose(warped,
                                   CANONICAL_CORNERS + p.reshape(4, 2),
                                   atol=1e-9)

    def test_rejects_bad_sigma(self, rng):
        with pytest.raises(ssm.WarpError):
            sample_warp(make_model("translation"), 0.0, rng)


class TestGroupProperties:
    @pytest.mark.parametrize("name", ALL_MODELS)
    def test_closure_and_distribution(self, name, rng):
        m = make_model(name)
        pts = rng.uniform(-0.5, 0.5, (6, 2))
        for _ in range(60):
            p, q = random_params(m, rng), random_params(m, rng)
            comp = m.compose(p, q)
            assert comp.shape == (m.dof,)
            lhs = apply_warp(m, comp, pts)
            rhs = apply_warp(m, p, apply_warp(m, q, pts))
            assert np.abs(lhs - rhs).max() < 1e-9

    def test_hierarchy_recovery(self, rng):
        order = ["translation", "isometry", "similitude", "affine",
                 "hom-matrix", "hom-sl3", "hom-corner"]
        for low_i, low_name in enumerate(order[:4]):
            low = make_model(low_name)
            p = random_params(low, rng)
            dst = apply_warp(low, p, CANONICAL_CORNERS)
            for high_name in order[low_i:]:
                high = make_model(high_name)
                q = fit_params(high, CANONICAL_CORNERS, dst)
                back = apply_warp(high, q, CANONICAL_CORNERS)
                assert np.abs(back - dst).max() < 1e-9

    def test_three_homography_parameterizations_agree(self, rng):
        models = [make_model(n) for n in HOM_MODELS]
        for _ in range(40):
            dst = CANONICAL_CORNERS + rng.normal(0, 0.08, (4, 2))
            if corners_degenerate(dst):
                continue
            warped = [apply_warp(m, fit_params(m, CANONICAL_CORNERS, dst),
                                 CANONICAL_CORNERS) for m in models]
            for w in warped[1:]:
                assert np.abs(w - warped[0]).max() < 1e-7


class TestCorners:
    def test_serialization_round_trip(self, rng):
        c = rng.normal(0, 100, (4, 2))
        text = format_corners(c)
        np.testing.assert_array_equal(parse_corners(text), c)
        assert format_corners(parse_corners(text)) == text

    def test_parse_rejects_short_line(self):
        with pytest.raises(ssm.WarpError):
            parse_corners("1 2 3 4 5 6 7")

    def test_degenerate_detection(self):
        assert corners_degenerate(np.array([[0., 0], [1, 0], [2, 0], [3, 0]]))
        assert not corners_degenerate(CANONICAL_CORNERS)

import numpy as np
import pytest

from regtrack import am
from regtrack.am import (JointHist, LOG_FLOOR, bin_scale, bin_weights,
                         bspline3, curvature, grad, joint_hist, make_am,
                         nn_distance, similarity)

from conftest import separated_patch

ALL_KINDS = am.am_names()
L2_ZERO_KINDS = ["ssd", "zncc", "scv", "rscv", "lscv"]


# -- independent scalar oracles (loop-based, no shared code paths) ----------

def oracle_weights(value, nbins):
    beta = min(max(value * (nbins - 1) / 255.0, 0.0), nbins - 1.0)
    w = {}
    base = int(np.floor(beta))
    for off in (-1, 0, 1, 2):
        j = base + off
        u = beta - j
        if abs(u) < 1.0:
            wj = 2.0 / 3.0 - u * u + abs(u) ** 3 / 2.0
        elif abs(u) < 2.0:
            wj = (2.0 - abs(u)) ** 3 / 6.0
        else:
            wj = 0.0
        jc = min(max(j, 0), nbins - 1)
        w[jc] = w.get(jc, 0.0) + wj
    return w


def oracle_joint(t, c, nbins):
    p = np.zeros((nbins, nbins))
    for tv, cv in zip(t, c):
        for j, wj in oracle_weights(tv, nbins).items():
            for i, wi in oracle_weights(cv, nbins).items():
                p[i, j] += wi * wj
    return p / len(t)


def oracle_mi(t, c, nbins=8):
    p = oracle_joint(t, c, nbins)
    pc = p.sum(axis=1)
    pt = p.sum(axis=0)
    total = 0.0
    for i in range(nbins):
        for j in range(nbins):
            total += p[i, j] * (np.log(p[i, j] + LOG_FLOOR)
                                - np.log(pc[i] * pt[j] + LOG_FLOOR))
    return total


def oracle_ccre(t, c, nbins=8):
    p = oracle_joint(t, c, nbins)
    cum = np.zeros_like(p)
    for i in range(nbins):
        for j in range(nbins):
            cum[i, j] = sum(p[k, j] for k in range(i + 1, nbins))
    pcum = cum.sum(axis=1)
    pt = p.sum(axis=0)
    total = 0.0
    for i in range(nbins):
        for j in range(nbins):
            total += cum[i, j] * (np.log(cum[i, j] + LOG_FLOOR)
                                  - np.log(pcum[i] * pt[j] + LOG_FLOOR))
    return total


@pytest.fixture
def patches(rng):
    t = rng.uniform(5, 250, 16)
    c = np.clip(t + rng.normal(0, 15, 16), 0, 255)
    return t, c


class TestBinning:
    def test_partition_of_unity(self, rng):
        w = bin_weights(rng.uniform(0, 255, 200), 8)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_linear_precision_interior(self):
        nbins = 16
        vals = np.linspace(40, 215, 50)
        w = bin_weights(vals, nbins)
        recovered = w @ np.arange(nbins)
        np.testing.assert_allclose(recovered, vals * bin_scale(nbins),
                                   atol=1e-10)

    def test_joint_hist_matches_oracle(self, rng):
        t = rng.uniform(0, 255, 30)
        c = rng.uniform(0, 255, 30)
        np.testing.assert_allclose(joint_hist(t, c, 8), oracle_joint(t, c, 8),
                                   atol=1e-12)

    def test_joint_hist_marginals_match_1d(self, rng):
        t = rng.uniform(0, 255, 40)
        c = rng.uniform(0, 255, 40)
        h = JointHist(t, c, 8)
        np.testing.assert_allclose(h.template_marginal,
                                   bin_weights(t, 8).mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(h.candidate_marginal,
                                   bin_weights(c, 8).mean(axis=0), atol=1e-12)
        assert h.counts.sum() == pytest.approx(1.0, abs=1e-12)


class TestSelfSimilarity:
    @pytest.mark.parametrize("kind", L2_ZERO_KINDS)
    def test_l2_family_zero_at_match(self, kind, patches):
        t, _ = patches
        assert similarity(make_am(kind), t, t) == pytest.approx(0.0, abs=1e-9)

    def test_ncc_one_at_match(self, patches):
        t, _ = patches
        assert similarity(make_am("ncc"), t, t) == pytest.approx(1.0)

    def test_mi_self_matches_oracle(self, patches):
        t, _ = patches
        assert similarity(make_am("mi"), t, t) == \
            pytest.approx(oracle_mi(t, t), abs=1e-12)

    def test_ccre_self_matches_oracle(self, patches):
        t, _ = patches
        assert similarity(make_am("ccre"), t, t) == \
            pytest.approx(oracle_ccre(t, t), abs=1e-12)

    def test_mi_cross_matches_oracle(self, patches):
        t, c = patches
        assert similarity(make_am("mi"), t, c) == \
            pytest.approx(oracle_mi(t, c), abs=1e-12)

    def test_ccre_cross_matches_oracle(self, patches):
        t, c = patches
        assert similarity(make_am("ccre"), t, c) == \
            pytest.approx(oracle_ccre(t, c), abs=1e-12)


class TestSimilarityValues:
    def test_ssd_direct(self):
        assert similarity(make_am("ssd"), np.zeros(4), np.ones(4)) == -4.0

    def test_ncc_gain_bias_invariance(self, patches):
        t, c = patches
        m = make_am("ncc")
        base = similarity(m, t, c)
        assert similarity(m, t, 2.5 * c + 40.0) == pytest.approx(base,
                                                                 abs=1e-12)
        assert similarity(m, t, 2.5 * t + 40.0) == pytest.approx(1.0,
                                                                 abs=1e-12)

    def test_zero_variance_sentinel(self):
        flat = np.full(9, 99.0)
        bumpy = np.arange(9.0)
        for kind in ("ncc", "zncc"):
            assert similarity(make_am(kind), flat, bumpy) == 0.0

    def test_length_mismatch_raises(self):
        with pytest.raises(am.PatchError):
            similarity(make_am("ssd"), np.zeros(3), np.zeros(4))


class TestGrad:
    def test_ssd_analytic(self, patches):
        t, c = patches
        np.testing.assert_allclose(grad(make_am("ssd"), t, c, "candidate"),
                                   -2.0 * (c - t))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    @pytest.mark.parametrize("wrt", ["candidate", "template"])
    def test_matches_finite_differences(self, kind, wrt, patches):
        t, c = patches
        m = make_am(kind)
        mapping = m.fit_mapping(t, c)
        g = grad(m, t, c, wrt, mapping=mapping)
        eps = 1e-3
        fd = np.empty_like(g)
        for k in range(t.size):
            e = np.zeros(t.size)
            e[k] = eps
            if wrt == "candidate":
                hi = similarity(m, t, c + e, mapping=mapping)
                lo = similarity(m, t, c - e, mapping=mapping)
            else:
                hi = similarity(m, t + e, c, mapping=mapping)
                lo = similarity(m, t - e, c, mapping=mapping)
            fd[k] = (hi - lo) / (2 * eps)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-3

    @pytest.mark.parametrize("kind", ["ssd", "zncc", "ncc"])
    def test_vanishes_at_match_smooth_kinds(self, kind, patches):
        t, _ = patches
        g = grad(make_am(kind), t, t, "candidate")
        assert np.abs(g).max() < 1e-6

    def test_mi_vanishes_at_match_on_bin_centers(self, rng):
        t = separated_patch(rng, 64)
        g = grad(make_am("mi", nbins=16), t, t, "candidate")
        assert np.abs(g).max() < 1e-6


class TestCurvature:
    def test_ssd_identity_jacobian(self):
        h = curvature(make_am("ssd"), np.arange(5.0), None, np.eye(5))
        np.testing.assert_allclose(h, -2.0 * np.eye(5))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_symmetric_negative_semidefinite(self, kind, patches, rng):
        t, _ = patches
        j = rng.normal(0, 1, (16, 5))
        h = curvature(make_am(kind), t, None, j)
        assert np.abs(h - h.T).max() < 1e-10
        eigs = np.linalg.eigvalsh(0.5 * (h + h.T))
        scale = max(np.abs(eigs).max(), 1.0)
        assert eigs.max() <= 1e-8 * scale

    def test_ncc_matches_fd_hessian_along_directions(self, rng):
        n, s = 24, 3
        t = rng.uniform(20, 235, n)
        q, _ = np.linalg.qr(rng.normal(0, 1, (n, s)))
        m = make_am("ncc")
        h = curvature(m, t, None, q)
        eps = 1e-2
        fd = np.zeros((s, s))
        for i in range(s):
            for j in range(s):
                pp = similarity(m, t, t + eps * q[:, i] + eps * q[:, j])
                pm = similarity(m, t, t + eps * q[:, i] - eps * q[:, j])
                mp = similarity(m, t, t - eps * q[:, i] + eps * q[:, j])
                mm = similarity(m, t, t - eps * q[:, i] - eps * q[:, j])
                fd[i, j] = (pp - pm - mp + mm) / (4 * eps * eps)
        rel = np.abs(h - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert rel < 1e-2

    def test_dimension_mismatch(self):
        with pytest.raises(Exception):
            curvature(make_am("ssd"), np.zeros(4), None, np.eye(5)) @ np.eye(4)


class TestNNDistance:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_at_match(self, kind, patches):
        t, _ = patches
        assert abs(nn_distance(make_am(kind), t, t)) < 1e-9

    def test_zncc_equals_correlation_form(self, patches):
        t, c = patches
        d = nn_distance(make_am("zncc"), t, c)
        rho = similarity(make_am("ncc"), t, c)
        assert d == pytest.approx(2 * t.size * (1 - rho), abs=1e-6)

    def test_ncc_uses_correlation_form(self, patches):
        t, c = patches
        d = nn_distance(make_am("ncc"), t, c)
        rho = similarity(make_am("ncc"), t, c)
        assert d == pytest.approx(2 * t.size * (1 - rho), abs=1e-9)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_positive_for_distinct_patches(self, kind, rng):
        m = make_am(kind)
        for _ in range(25):
            a = rng.uniform(10, 245, 16)
            b = np.clip(a + rng.normal(0, 20, 16), 0, 255)
            assert nn_distance(m, a, b) > nn_distance(m, a, a)


class TestInvariants:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_argmax_consistency(self, kind, rng):
        m = make_am(kind)
        t = rng.uniform(10, 245, 25)
        candidates = [t] + [np.clip(t + rng.normal(0, 8 + 4 * k, 25), 0, 255)
                            for k in range(6)]
        scores = [similarity(m, t, c) for c in candidates]
        assert int(np.argmax(scores)) == 0

    def test_zncc_ncc_identical_ordering(self, rng):
        t = rng.uniform(10, 245, 30)
        candidates = [np.clip(t + rng.normal(0, 5 + 3 * k, 30), 0, 255)
                      for k in range(8)]
        zncc = [similarity(make_am("zncc"), t, c) for c in candidates]
        ncc = [similarity(make_am("ncc"), t, c) for c in candidates]
        assert list(np.argsort(zncc)) == list(np.argsort(ncc))

    @pytest.mark.parametrize("kind", ["mi", "ccre"])
    def test_bin_permutation_invariance(self, kind, rng):
        # values on well-separated bin centers; swapping two levels is a
        # pure relabeling of the candidate's bins
        nbins = 16
        t = separated_patch(rng, 80, nbins)
        c = separated_patch(rng, 80, nbins)
        swap = {3: 13, 13: 3, 8: 8}
        scale = bin_scale(nbins)
        c_perm = np.array([swap[int(round(v * scale))] for v in c]) / scale
        m = make_am(kind, nbins=nbins)
        assert similarity(m, t, c_perm) == pytest.approx(
            similarity(m, t, c), abs=1e-9)

    def test_scv_mapping_identity_at_match(self, rng):
        m = make_am("scv")
        t = rng.uniform(10, 245, 40)
        offsets = m.fit_mapping(t, t)
        np.testing.assert_allclose(offsets, 0.0, atol=1e-9)

    def test_lscv_matches_scv_on_uniform_change(self, rng):
        # a global gain change is captured by every subregion equally
        t = rng.uniform(50, 200, 100)
        c = np.clip(t + 20.0, 0, 255)
        s_scv = similarity(make_am("scv"), t, c)
        s_lscv = similarity(make_am("lscv"), t, c)
        assert s_lscv == pytest.approx(s_scv, rel=0.2, abs=1e-6)

    def test_rscv_zero_on_per_bin_shift(self, rng):
        # candidate shifted by a bin-constant amount: mapping removes it
        nbins = 8
        t = separated_patch(rng, 120, nbins, levels=(1, 4, 6))
        shift = {1: 9.0, 4: -11.0, 6: 4.0}
        scale = bin_scale(nbins)
        c = np.array([v + shift[int(round(v * scale))] for v in t])
        assert similarity(make_am("rscv", nbins=nbins), t, c) == \
            pytest.approx(0.0, abs=1e-9)


class TestFactory:
    def test_unknown_kind(self):
        with pytest.raises(am.PatchError):
            make_am("sad")

    def test_bin_count_guard(self):
        with pytest.raises(am.PatchError):
            make_am("mi", nbins=1)

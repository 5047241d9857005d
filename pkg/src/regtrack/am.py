"""Appearance models: similarity scores, intensity gradients, curvature.

Every model scores a candidate patch against the template so that larger
is better and the maximum is at candidate == template. Three families:

* L2-type: SSD, and the conditional-variance family SCV / RSCV / LSCV
  which subtract a per-bin intensity correction learned from a joint
  histogram before taking the L2 norm.
* Correlation: NCC (Pearson) and ZNCC (L2 norm between z-scored patches,
  argmax-equivalent to NCC).
* Histogram: MI and CCRE, computed from a cubic B-spline soft-binned
  joint histogram (CCRE accumulates the candidate axis cumulatively).

``grad`` returns analytic derivatives with respect to either patch;
``conv_curvature`` returns the S x S quadratic form of the analytic
intensity Hessian evaluated at candidate == template ("curvature at
convergence"), which drives Gauss-Newton-style steps for every model.

The SCV-family intensity mapping is refitted once per frame and held
fixed across iterations: ``fit_mapping`` learns it, and ``similarity`` /
``grad`` accept the frozen mapping. Called without one they are pure and
refit from the given pair.
"""

import numpy as np

LOG_FLOOR = 1e-10
DEFAULT_BINS = 8


class PatchError(ValueError):
    pass


def _pair(t, c):
    t = np.asarray(t, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    if t.shape != c.shape:
        raise PatchError(f"patch length mismatch: {t.shape} vs {c.shape}")
    if t.size == 0:
        raise PatchError("empty patches")
    return t, c


# ---------------------------------------------------------------------------
# cubic B-spline binning

def bspline3(u):
    u = np.abs(u)
    out = np.zeros_like(u)
    near = u < 1.0
    far = (u >= 1.0) & (u < 2.0)
    out[near] = 2.0 / 3.0 - u[near] ** 2 + 0.5 * u[near] ** 3
    out[far] = ((2.0 - u[far]) ** 3) / 6.0
    return out


def bspline3_d1(u):
    s = np.sign(u)
    u = np.abs(u)
    out = np.zeros_like(u)
    near = u < 1.0
    far = (u >= 1.0) & (u < 2.0)
    out[near] = -2.0 * u[near] + 1.5 * u[near] ** 2
    out[far] = -0.5 * (2.0 - u[far]) ** 2
    return out * s


def bspline3_d2(u):
    u = np.abs(u)
    out = np.zeros_like(u)
    near = u < 1.0
    far = (u >= 1.0) & (u < 2.0)
    out[near] = -2.0 + 3.0 * u[near]
    out[far] = 2.0 - u[far]
    return out


def bin_scale(nbins):
    """Linear map factor from [0, 255] intensities to [0, nbins-1] bins."""
    return (nbins - 1) / 255.0


def bin_weights(values, nbins, deriv=0):
    """(N, nbins) soft-binning weight matrix (or its derivative).

    Out-of-range spline taps are folded into the edge bins, so weight
    rows always sum to 1 ("clamped support").
    """
    beta = np.clip(np.asarray(values, dtype=np.float64).ravel() * bin_scale(nbins),
                   0.0, nbins - 1.0)
    base = np.floor(beta).astype(np.int64)
    kern = {0: bspline3, 1: bspline3_d1, 2: bspline3_d2}[deriv]
    w = np.zeros((beta.size, nbins))
    rows = np.arange(beta.size)
    for off in (-1, 0, 1, 2):
        j = base + off
        wj = kern(beta - j)
        np.add.at(w, (rows, np.clip(j, 0, nbins - 1)), wj)
    return w


def joint_hist(t, c, nbins=DEFAULT_BINS):
    """Soft-binned joint histogram P[i, j] = P(c-bin i, t-bin j)."""
    t, c = _pair(t, c)
    wt = bin_weights(t, nbins)
    wc = bin_weights(c, nbins)
    return (wc.T @ wt) / t.size


class JointHist:
    """Normalized joint histogram with consistent marginals."""

    def __init__(self, t, c, nbins=DEFAULT_BINS):
        self.nbins = nbins
        self.kernel_order = 3
        self.counts = joint_hist(t, c, nbins)
        self.candidate_marginal = self.counts.sum(axis=1)
        self.template_marginal = self.counts.sum(axis=0)


# ---------------------------------------------------------------------------
# model base

class AppearanceModel:
    name = None
    needs_mapping = False

    def fit_mapping(self, t, c):
        """Learn the per-frame intensity mapping (None for most models)."""
        return None

    def similarity(self, t, c, mapping=None):
        raise NotImplementedError

    def grad(self, t, c, wrt="candidate", mapping=None):
        raise NotImplementedError

    def conv_curvature(self, t, dIdp):
        """S x S curvature dIdp' (d2f/dI2 at c == t) dIdp."""
        raise NotImplementedError

    def nn_distance(self, a, b):
        """Dissimilarity with perfect-match value 0, for index search."""
        a, b = _pair(a, b)
        return -self.similarity(a, b)

    def __repr__(self):
        return f"<AppearanceModel {self.name}>"


class SSD(AppearanceModel):
    """Negated sum of squared pixel differences."""

    name = "ssd"

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        d = c - t
        return -float(d @ d)

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        g = -2.0 * (c - t)
        return g if wrt == "candidate" else -g

    def conv_curvature(self, t, dIdp):
        dIdp = np.atleast_2d(dIdp)
        return -2.0 * (dIdp.T @ dIdp)


class NCC(AppearanceModel):
    """Pearson correlation; invariant to gain and bias of either patch."""

    name = "ncc"

    @staticmethod
    def _centered(v):
        vc = v - v.mean()
        norm = np.sqrt(vc @ vc)
        return vc, norm

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        tc, tn = self._centered(t)
        cc, cn = self._centered(c)
        if tn < 1e-12 or cn < 1e-12:
            return 0.0  # zero-variance sentinel
        return float((tc @ cc) / (tn * cn))

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        if wrt == "template":
            t, c = c, t
        tc, tn = self._centered(t)
        cc, cn = self._centered(c)
        if tn < 1e-12 or cn < 1e-12:
            return np.zeros_like(c)
        rho = (tc @ cc) / (tn * cn)
        g = tc / (tn * cn) - (rho / (cn * cn)) * cc
        return g - g.mean()  # project out the mean direction

    def conv_curvature(self, t, dIdp):
        t = np.asarray(t, dtype=np.float64).ravel()
        dIdp = np.atleast_2d(dIdp)
        tc, tn = self._centered(t)
        if tn < 1e-12:
            return -2.0 * (dIdp.T @ dIdp)  # degenerate: SSD-like fallback
        that = tc / tn
        a = dIdp - dIdp.mean(axis=0)
        v = a.T @ that
        return -(a.T @ a - np.outer(v, v)) / (tn * tn)

    def nn_distance(self, a, b):
        a, b = _pair(a, b)
        return 2.0 * a.size * (1.0 - self.similarity(a, b))


class ZNCC(AppearanceModel):
    """Negated SSD between z-score normalized patches (= 2N(NCC - 1))."""

    name = "zncc"

    @staticmethod
    def _zscore(v):
        vc = v - v.mean()
        sd = np.sqrt((vc @ vc) / v.size)
        return (vc / sd, sd) if sd >= 1e-12 else (None, sd)

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        zt, _ = self._zscore(t)
        zc, _ = self._zscore(c)
        if zt is None or zc is None:
            return 0.0
        d = zc - zt
        return -float(d @ d)

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        if wrt == "template":
            t, c = c, t  # symmetric score
        zt, _ = self._zscore(t)
        zc, sd = self._zscore(c)
        if zt is None or zc is None:
            return np.zeros_like(c)
        n = c.size
        # d z(c)/dc = (1/sd) (I - zhat zhat') P; chain through it
        resid = -2.0 * (zc - zt)
        inner = resid - (resid @ zc) * zc / n
        return (inner - inner.mean()) / sd

    def conv_curvature(self, t, dIdp):
        t = np.asarray(t, dtype=np.float64).ravel()
        base = NCC().conv_curvature(t, dIdp)
        return 2.0 * t.size * base


class _HistogramModel(AppearanceModel):
    def __init__(self, nbins=DEFAULT_BINS):
        if nbins < 2:
            raise PatchError(f"need at least 2 bins, got {nbins}")
        self.nbins = int(nbins)

    def _scale(self):
        return bin_scale(self.nbins)


class _ConditionalVarianceBase(_HistogramModel):
    """Shared machinery of SCV / RSCV: per-bin intensity corrections.

    The correction for bin j is E[other | bin j] - E[self | bin j], both
    conditional means taken from soft-binned joint histograms, so the
    mapping is exactly the identity when the patches coincide.
    """

    needs_mapping = True

    def _offsets(self, ref, other):
        """Per-bin additive corrections learned from the (ref, other) pair."""
        w = bin_weights(ref, self.nbins)
        mass = w.sum(axis=0)
        occupied = mass > 1e-12
        d = np.zeros(self.nbins)
        d[occupied] = (w.T @ (other - ref))[occupied] / mass[occupied]
        return d

    def _mapped(self, values, offsets):
        w = bin_weights(values, self.nbins)
        return values + w @ offsets

    def _mapped_slope(self, values, offsets):
        wd = bin_weights(values, self.nbins, deriv=1)
        return 1.0 + self._scale() * (wd @ offsets)


class SCV(_ConditionalVarianceBase):
    """Negated L2 norm against the conditionally remapped template."""

    name = "scv"

    def fit_mapping(self, t, c):
        t, c = _pair(t, c)
        return self._offsets(t, c)

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        d = mapping if mapping is not None else self.fit_mapping(t, c)
        r = c - self._mapped(t, d)
        return -float(r @ r)

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        d = mapping if mapping is not None else self.fit_mapping(t, c)
        r = c - self._mapped(t, d)
        if wrt == "candidate":
            return -2.0 * r
        return 2.0 * r * self._mapped_slope(t, d)

    def conv_curvature(self, t, dIdp):
        dIdp = np.atleast_2d(dIdp)
        return -2.0 * (dIdp.T @ dIdp)  # mapping is identity at c == t


class RSCV(_ConditionalVarianceBase):
    """SCV with the mapping applied to the candidate instead."""

    name = "rscv"

    def fit_mapping(self, t, c):
        t, c = _pair(t, c)
        return self._offsets(c, t)

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        d = mapping if mapping is not None else self.fit_mapping(t, c)
        r = self._mapped(c, d) - t
        return -float(r @ r)

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        d = mapping if mapping is not None else self.fit_mapping(t, c)
        r = self._mapped(c, d) - t
        if wrt == "candidate":
            return -2.0 * r * self._mapped_slope(c, d)
        return 2.0 * r

    def conv_curvature(self, t, dIdp):
        dIdp = np.atleast_2d(dIdp)
        return -2.0 * (dIdp.T @ dIdp)


class LSCV(_ConditionalVarianceBase):
    """SCV with localized mappings blended over a subregion grid.

    One joint histogram per subregion of an overlapping ``subgrid`` layout
    (default 3x3); per-pixel corrections are blended with bilinear hat
    weights over the subregion centers. Patches are assumed to be square
    row-major unless a resolution is supplied.
    """

    name = "lscv"

    def __init__(self, nbins=DEFAULT_BINS, subgrid=(3, 3), resolution=None):
        super().__init__(nbins)
        self.subgrid = (int(subgrid[0]), int(subgrid[1]))
        self.resolution = resolution

    def _layout(self, n):
        if self.resolution is not None:
            nx, ny = self.resolution
        else:
            nx = int(round(np.sqrt(n)))
            ny = nx
        if nx * ny != n:
            raise PatchError(f"cannot lay out {n} pixels as a grid; "
                             "pass an explicit resolution")
        return nx, ny

    def _blend(self, n):
        """(N, R) bilinear blend weights over subregion centers."""
        nx, ny = self._layout(n)
        gx, gy = self.subgrid
        ix = np.tile(np.arange(nx), ny)
        iy = np.repeat(np.arange(ny), nx)

        def axis_weights(idx, count, groups):
            centers = (np.arange(groups) + 0.5) * count / groups - 0.5
            pos = idx[:, None]
            if groups == 1:
                return np.ones((idx.size, 1))
            stride = count / groups
            w = np.maximum(0.0, 1.0 - np.abs(pos - centers[None, :]) / stride)
            w[pos.ravel() <= centers[0], 0] = 1.0
            w[pos.ravel() >= centers[-1], -1] = 1.0
            return w / w.sum(axis=1, keepdims=True)

        wx = axis_weights(ix, nx, gx)
        wy = axis_weights(iy, ny, gy)
        return (wy[:, :, None] * wx[:, None, :]).reshape(n, gx * gy)

    def fit_mapping(self, t, c):
        t, c = _pair(t, c)
        blend = self._blend(t.size)
        wt = bin_weights(t, self.nbins)
        offsets = np.zeros((blend.shape[1], self.nbins))
        for r in range(blend.shape[1]):
            w = wt * blend[:, r:r + 1]
            mass = w.sum(axis=0)
            occ = mass > 1e-12
            offsets[r, occ] = (w.T @ (c - t))[occ] / mass[occ]
        return (blend, offsets)

    def _correction(self, t, mapping):
        blend, offsets = mapping
        wt = bin_weights(t, self.nbins)
        return np.sum(blend * (wt @ offsets.T), axis=1)

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        m = mapping if mapping is not None else self.fit_mapping(t, c)
        r = c - (t + self._correction(t, m))
        return -float(r @ r)

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        m = mapping if mapping is not None else self.fit_mapping(t, c)
        r = c - (t + self._correction(t, m))
        if wrt == "candidate":
            return -2.0 * r
        blend, offsets = m
        wd = bin_weights(t, self.nbins, deriv=1)
        slope = 1.0 + self._scale() * np.sum(blend * (wd @ offsets.T), axis=1)
        return 2.0 * r * slope

    def conv_curvature(self, t, dIdp):
        dIdp = np.atleast_2d(dIdp)
        return -2.0 * (dIdp.T @ dIdp)


class MI(_HistogramModel):
    """Mutual information over the soft-binned joint histogram."""

    name = "mi"

    def _tables(self, t, c):
        n = t.size
        wt = bin_weights(t, self.nbins)
        wc = bin_weights(c, self.nbins)
        p = (wc.T @ wt) / n
        pc = p.sum(axis=1)
        pt = p.sum(axis=0)
        return wt, wc, p, pc, pt

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        _, _, p, pc, pt = self._tables(t, c)
        ratio = np.log(p + LOG_FLOOR) - np.log(np.outer(pc, pt) + LOG_FLOOR)
        return float(np.sum(p * ratio))

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        if wrt == "template":
            t, c = c, t  # MI is symmetric with transposed histogram
        n = t.size
        wt, _, p, pc, _ = self._tables(t, c)
        wcd = bin_weights(c, self.nbins, deriv=1)
        lp = np.log(p + LOG_FLOOR)
        lc = np.log(pc + LOG_FLOOR)
        s = self._scale()
        # dMI/dc_k = (s/n) sum_i w'_i(c_k) [sum_j w_j(t_k) log P(i,j) - log pc(i)]
        return (s / n) * (np.einsum("ki,ij,kj->k", wcd, lp, wt) - wcd @ lc)

    def conv_curvature(self, t, dIdp):
        t = np.asarray(t, dtype=np.float64).ravel()
        dIdp = np.atleast_2d(dIdp)
        n = t.size
        s = self._scale()
        w = bin_weights(t, self.nbins)
        wd = bin_weights(t, self.nbins, deriv=1)
        wdd = bin_weights(t, self.nbins, deriv=2)
        p = (w.T @ w) / n
        pc = p.sum(axis=1)
        lp = np.log(p + LOG_FLOOR)
        lc = np.log(pc + LOG_FLOOR)
        diag = (s * s / n) * (np.einsum("ki,ij,kj->k", wdd, lp, w) - wdd @ lc)
        out = dIdp.T @ (dIdp * diag[:, None])
        inv_p = 1.0 / (p + LOG_FLOOR)
        inv_c = 1.0 / (pc + LOG_FLOOR)
        for i in range(self.nbins):
            di = dIdp * wd[:, i:i + 1]
            vij = di.T @ w  # columns: dIdp' (w'_i * w_j)
            out += (s * s / (n * n)) * (vij * inv_p[i]) @ vij.T
            ui = di.sum(axis=0)
            out -= (s * s / (n * n)) * inv_c[i] * np.outer(ui, ui)
        return out

    def nn_distance(self, a, b):
        a, b = _pair(a, b)
        return self.similarity(a, a) - self.similarity(a, b)


class CCRE(_HistogramModel):
    """Cross cumulative residual entropy.

    The joint histogram is accumulated cumulatively along the candidate
    axis: C(i, j) = P(c-bin > i, t-bin = j). The reversed orientation
    (cumulative template axis) is available via ``reverse=True``.
    """

    name = "ccre"

    def __init__(self, nbins=DEFAULT_BINS, reverse=False):
        super().__init__(nbins)
        self.reverse = bool(reverse)

    @staticmethod
    def _cum_above(m, axis=0):
        """Sum over indices strictly greater, along the given axis."""
        rev = np.flip(np.cumsum(np.flip(m, axis=axis), axis=axis), axis=axis)
        return rev - m

    def _tables(self, t, c):
        if self.reverse:
            t, c = c, t
        n = t.size
        wt = bin_weights(t, self.nbins)
        wc = bin_weights(c, self.nbins)
        p = (wc.T @ wt) / n
        cum = self._cum_above(p, axis=0)
        pcum = cum.sum(axis=1)
        pt = p.sum(axis=0)
        return wt, wc, p, cum, pcum, pt

    def similarity(self, t, c, mapping=None):
        t, c = _pair(t, c)
        _, _, _, cum, pcum, pt = self._tables(t, c)
        ratio = np.log(cum + LOG_FLOOR) - np.log(np.outer(pcum, pt) + LOG_FLOOR)
        return float(np.sum(cum * ratio))

    def grad(self, t, c, wrt="candidate", mapping=None):
        t, c = _pair(t, c)
        swapped = self.reverse != (wrt == "template")
        n = t.size
        wt, wc, p, cum, pcum, pt = self._tables(t, c)
        s = self._scale()
        lr = np.log(cum + LOG_FLOOR) - np.log(np.outer(pcum, pt) + LOG_FLOOR)
        if not swapped:
            # derivative w.r.t. the cumulative-axis patch
            x = c if not self.reverse else t
            wxd = bin_weights(x, self.nbins, deriv=1)
            vd = self._cum_above(wxd.T, axis=0).T  # V_i(x_k) = sum_{i'>i} w'_{i'}
            return (s / n) * np.einsum("ki,ij,kj->k", vd, lr, wt)
        # derivative w.r.t. the marginal-axis patch (includes the p_t term)
        x = t if not self.reverse else c
        wxd = bin_weights(x, self.nbins, deriv=1)
        wcum = self._cum_above(wc.T, axis=0).T
        g = np.einsum("ki,ij,kj->k", wcum, lr, wxd)
        colsum = cum.sum(axis=0)
        g -= wxd @ (colsum / (pt + LOG_FLOOR))
        return (s / n) * g

    def conv_curvature(self, t, dIdp):
        # second derivative w.r.t. the cumulative-axis patch at c == t
        # (the candidate in the default orientation)
        t = np.asarray(t, dtype=np.float64).ravel()
        dIdp = np.atleast_2d(dIdp)
        n = t.size
        s = self._scale()
        w = bin_weights(t, self.nbins)
        wd = bin_weights(t, self.nbins, deriv=1)
        wdd = bin_weights(t, self.nbins, deriv=2)
        p = (w.T @ w) / n
        cum = self._cum_above(p, axis=0)
        pcum = cum.sum(axis=1)
        pt = p.sum(axis=0)
        lr = np.log(cum + LOG_FLOOR) - np.log(np.outer(pcum, pt) + LOG_FLOOR)
        vd = self._cum_above(wd.T, axis=0).T
        vdd = self._cum_above(wdd.T, axis=0).T
        diag = (s * s / n) * np.einsum("ki,ij,kj->k", vdd, lr, w)
        out = dIdp.T @ (dIdp * diag[:, None])
        inv_cum = 1.0 / (cum + LOG_FLOOR)
        inv_pc = 1.0 / (pcum + LOG_FLOOR)
        scale2 = s * s / (n * n)
        for i in range(self.nbins):
            di = dIdp * vd[:, i:i + 1]
            vij = di.T @ w
            out += scale2 * (vij * inv_cum[i]) @ vij.T
            ui = di.sum(axis=0)
            out -= scale2 * inv_pc[i] * np.outer(ui, ui)
        return out

    def nn_distance(self, a, b):
        a, b = _pair(a, b)
        return self.similarity(a, a) - self.similarity(a, b)


AM_CLASSES = {cls.name: cls for cls in
              (SSD, NCC, ZNCC, SCV, RSCV, LSCV, MI, CCRE)}


def am_names():
    return sorted(AM_CLASSES)


def make_am(name, **kwargs):
    key = str(name).strip().lower()
    if key not in AM_CLASSES:
        raise PatchError(f"unknown appearance model {name!r}; "
                         f"choose from {am_names()}")
    cls = AM_CLASSES[key]
    if cls in (SSD, NCC, ZNCC):
        kwargs.pop("nbins", None)
        kwargs.pop("subgrid", None)
        kwargs.pop("resolution", None)
        return cls()
    if cls is not LSCV:
        kwargs.pop("subgrid", None)
        kwargs.pop("resolution", None)
    return cls(**kwargs)


# functional wrappers matching the operation names

def similarity(am, t, c, mapping=None):
    return am.similarity(t, c, mapping=mapping)


def grad(am, t, c, wrt="candidate", mapping=None):
    if wrt not in ("candidate", "template"):
        raise PatchError(f"wrt must be candidate or template, got {wrt!r}")
    return am.grad(t, c, wrt=wrt, mapping=mapping)


def curvature(am, t, c, dIdp):
    """Convergence curvature; ``c`` is accepted for signature parity."""
    return am.conv_curvature(t, dIdp)


def nn_distance(am, a, b):
    return am.nn_distance(a, b)

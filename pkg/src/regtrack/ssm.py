"""Warp models: warp functions, parameter updates, Jacobians, fitting.

Seven parameterizations are provided: translation (2 dof), isometry (3),
similitude (4), affine (6) and three 8-dof homography parameterizations
(matrix entries, sl(3) Lie-algebra coefficients, corner displacements).
Every model uses a zero-is-identity parameter vector, composes exactly
within its group, and exposes analytic Jacobians with respect to both its
parameters and the warped point.

Corners are (4, 2) arrays ordered upper-left, upper-right, lower-right,
lower-left; the canonical patch frame is the centered unit square.
"""

import numpy as np
from scipy.linalg import logm as _scipy_logm

SINGULAR_EPS = 1e-12

CANONICAL_CORNERS = np.array(
    [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]], dtype=np.float64
)


class WarpError(ValueError):
    pass


class SingularWarpError(WarpError):
    """Projective division by a (near-)zero denominator."""


class DegenerateWarpError(WarpError):
    """Corner set or parameter set outside the model's valid domain."""


# ---------------------------------------------------------------------------
# small matrix helpers

def expm_fixed(a):
    """Matrix exponential by scaling-and-squaring with a fixed Taylor order.

    Accurate to machine precision for the small (3x3 / 6x6) matrices used
    here; validated against a brute-force series oracle in the tests.
    """
    a = np.asarray(a, dtype=np.float64)
    norm = np.linalg.norm(a, ord=np.inf)
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    b = a / (2.0 ** squarings)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 19):
        term = term @ b / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def _dexpm(a, b):
    """Directional derivative of expm at ``a`` along ``b`` (block trick)."""
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = a
    block[n:, n:] = a
    block[:n, n:] = b
    return expm_fixed(block)[:n, n:]


def _logm_real(h):
    l = _scipy_logm(h)
    if np.max(np.abs(l.imag)) > 1e-9:
        raise DegenerateWarpError("homography outside the exponential image")
    return np.ascontiguousarray(l.real)


def _check_corners(c, name="corners"):
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (4, 2):
        raise WarpError(f"{name} must be a (4, 2) array, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise WarpError(f"{name} contain non-finite values")
    return c


def corners_degenerate(c, tol=1e-9):
    """True when any three of the four corners are (nearly) collinear."""
    c = _check_corners(c)
    scale = max(np.ptp(c[:, 0]), np.ptp(c[:, 1]), 1e-30)
    for i in range(4):
        p = np.delete(c, i, axis=0)
        cross = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - \
                (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0])
        if abs(cross) < tol * scale * scale:
            return True
    return False


def projective_apply(h, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    u = pts[:, 0] * h[0, 0] + pts[:, 1] * h[0, 1] + h[0, 2]
    v = pts[:, 0] * h[1, 0] + pts[:, 1] * h[1, 1] + h[1, 2]
    d = pts[:, 0] * h[2, 0] + pts[:, 1] * h[2, 1] + h[2, 2]
    if np.any(np.abs(d) < SINGULAR_EPS):
        raise SingularWarpError("projective denominator below threshold")
    return np.column_stack([u / d, v / d])


def projective_point_jacobian(h, pts):
    """d(warped point)/d(point) for a homography, one 2x2 block per point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    u = pts[:, 0] * h[0, 0] + pts[:, 1] * h[0, 1] + h[0, 2]
    v = pts[:, 0] * h[1, 0] + pts[:, 1] * h[1, 1] + h[1, 2]
    d = pts[:, 0] * h[2, 0] + pts[:, 1] * h[2, 1] + h[2, 2]
    if np.any(np.abs(d) < SINGULAR_EPS):
        raise SingularWarpError("projective denominator below threshold")
    x, y = u / d, v / d
    jac = np.empty((pts.shape[0], 2, 2))
    jac[:, 0, 0] = (h[0, 0] - x * h[2, 0]) / d
    jac[:, 0, 1] = (h[0, 1] - x * h[2, 1]) / d
    jac[:, 1, 0] = (h[1, 0] - y * h[2, 0]) / d
    jac[:, 1, 1] = (h[1, 1] - y * h[2, 1]) / d
    return jac


def dlt_homography(src, dst):
    """Direct linear transform for 4+ correspondences (exact for 4).

    Uses Hartley normalization; the result is scaled so H[2, 2] = 1.
    """
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    if src.shape != dst.shape or src.shape[0] < 4:
        raise WarpError("need at least 4 matching points")

    def normalizer(p):
        mean = p.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(p - mean, axis=1)), 1e-30)
        t = np.array([[scale, 0, -scale * mean[0]],
                      [0, scale, -scale * mean[1]],
                      [0, 0, 1.0]])
        return t

    ts, td = normalizer(src), normalizer(dst)
    s = projective_apply(ts, src)
    d = projective_apply(td, dst)
    n = s.shape[0]
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = s[:, 0]
    a[0::2, 1] = s[:, 1]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -d[:, 0] * s[:, 0]
    a[0::2, 7] = -d[:, 0] * s[:, 1]
    a[0::2, 8] = -d[:, 0]
    a[1::2, 3] = s[:, 0]
    a[1::2, 4] = s[:, 1]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -d[:, 1] * s[:, 0]
    a[1::2, 7] = -d[:, 1] * s[:, 1]
    a[1::2, 8] = -d[:, 1]
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * max(sv[0], 1e-30):
        raise DegenerateWarpError("degenerate correspondences for homography")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ h @ ts
    if abs(h[2, 2]) < SINGULAR_EPS * max(np.abs(h).max(), 1.0):
        raise DegenerateWarpError("homography cannot be normalized (H33 ~ 0)")
    return h / h[2, 2]


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# warp models

class WarpModel:
    """Base class; parameters are 1-d float vectors, zero = identity."""

    name = None
    dof = None

    def identity(self):
        return np.zeros(self.dof)

    def check(self, p):
        p = np.asarray(p, dtype=np.float64).ravel()
        if p.shape != (self.dof,):
            raise WarpError(f"{self.name} expects {self.dof} parameters, "
                            f"got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise WarpError(f"{self.name} parameters contain non-finite values")
        return p

    # -- core geometry -----------------------------------------------------
    def matrix(self, p):
        """3x3 matrix of the warp (every model here is projective)."""
        return self._matrix(self.check(p))

    def _matrix(self, p):
        raise NotImplementedError

    def from_matrix(self, h):
        raise NotImplementedError

    def apply(self, p, pts):
        return projective_apply(self.matrix(p), pts)

    def point_jacobian(self, p, pts):
        return projective_point_jacobian(self.matrix(p), pts)

    def param_jacobian(self, p, pts):
        """Analytic d(warped point)/d(params), shape (N, 2, dof)."""
        raise NotImplementedError

    # -- group operations ----------------------------------------------------
    def compose(self, p, q):
        """Parameters of w(., p) o w(., q)."""
        return self.from_matrix(self.matrix(self.check(p)) @ self.matrix(self.check(q)))

    def invert(self, p):
        h = self.matrix(self.check(p))
        hinv = np.linalg.inv(h)
        if abs(hinv[2, 2]) < SINGULAR_EPS:
            raise SingularWarpError("inverse homography cannot be normalized")
        return self.from_matrix(hinv / hinv[2, 2])

    # -- estimation ----------------------------------------------------------
    def fit(self, src, dst):
        """Least-squares parameters mapping src points onto dst points."""
        raise NotImplementedError

    def sample(self, sigma, rng, max_tries=32):
        """Random warp from i.i.d. Gaussian corner perturbations.

        The canonical unit-square corners are perturbed with the given
        standard deviation and the model is fitted from the canonical
        square to the result; degenerate draws are retried.
        """
        if sigma <= 0:
            raise WarpError(f"sigma must be positive, got {sigma}")
        for _ in range(max_tries):
            perturbed = CANONICAL_CORNERS + rng.normal(0.0, sigma, size=(4, 2))
            if corners_degenerate(perturbed):
                continue
            try:
                return self.fit(CANONICAL_CORNERS, perturbed)
            except WarpError:
                continue
        raise DegenerateWarpError(
            f"could not sample a valid {self.name} warp in {max_tries} tries")

    def __repr__(self):
        return f"<WarpModel {self.name} ({self.dof} dof)>"


class Translation(WarpModel):
    name = "translation"
    dof = 2

    def _matrix(self, p):
        h = np.eye(3)
        h[0, 2], h[1, 2] = p
        return h

    def from_matrix(self, h):
        return np.array([h[0, 2], h[1, 2]]) / h[2, 2]

    def apply(self, p, pts):
        return np.atleast_2d(np.asarray(pts, dtype=np.float64)) + self.check(p)

    def point_jacobian(self, p, pts):
        n = np.atleast_2d(pts).shape[0]
        return np.broadcast_to(np.eye(2), (n, 2, 2)).copy()

    def param_jacobian(self, p, pts):
        n = np.atleast_2d(pts).shape[0]
        return np.broadcast_to(np.eye(2), (n, 2, 2)).copy()

    def compose(self, p, q):
        return self.check(p) + self.check(q)

    def invert(self, p):
        return -self.check(p)

    def fit(self, src, dst):
        src = np.atleast_2d(src)
        dst = np.atleast_2d(dst)
        return (dst - src).mean(axis=0)


class Isometry(WarpModel):
    """Rigid motion (tx, ty, theta): w(x) = R(theta) x + t."""

    name = "isometry"
    dof = 3

    def _matrix(self, p):
        h = np.eye(3)
        h[:2, :2] = _rot(p[2])
        h[0, 2], h[1, 2] = p[0], p[1]
        return h

    def param_jacobian(self, p, pts):
        p = self.check(p)
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        jac = np.zeros((n, 2, 3))
        jac[:, 0, 0] = 1.0
        jac[:, 1, 1] = 1.0
        rp = pts @ _rot(p[2] + 0.5 * np.pi).T  # dR/dtheta = R(theta + pi/2)
        jac[:, 0, 2] = rp[:, 0]
        jac[:, 1, 2] = rp[:, 1]
        return jac

    def compose(self, p, q):
        p, q = self.check(p), self.check(q)
        theta = np.arctan2(np.sin(p[2] + q[2]), np.cos(p[2] + q[2]))
        t = _rot(p[2]) @ q[:2] + p[:2]
        return np.array([t[0], t[1], theta])

    def invert(self, p):
        p = self.check(p)
        t = -(_rot(-p[2]) @ p[:2])
        return np.array([t[0], t[1], -p[2]])

    def fit(self, src, dst):
        src = np.atleast_2d(src)
        dst = np.atleast_2d(dst)
        sc = src - src.mean(axis=0)
        dc = dst - dst.mean(axis=0)
        dots = float(np.sum(sc * dc))
        cross = float(np.sum(sc[:, 0] * dc[:, 1] - sc[:, 1] * dc[:, 0]))
        if abs(dots) < 1e-30 and abs(cross) < 1e-30:
            raise DegenerateWarpError("isometry fit is underdetermined")
        theta = np.arctan2(cross, dots)
        t = dst.mean(axis=0) - _rot(theta) @ src.mean(axis=0)
        return np.array([t[0], t[1], theta])


class Similitude(WarpModel):
    """Similarity (tx, ty, s, theta) with log-scale s: w = e^s R(theta) x + t."""

    name = "similitude"
    dof = 4

    def _matrix(self, p):
        h = np.eye(3)
        h[:2, :2] = np.exp(p[2]) * _rot(p[3])
        h[0, 2], h[1, 2] = p[0], p[1]
        return h

    def param_jacobian(self, p, pts):
        p = self.check(p)
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        scale = np.exp(p[2])
        jac = np.zeros((n, 2, 4))
        jac[:, 0, 0] = 1.0
        jac[:, 1, 1] = 1.0
        r = scale * (pts @ _rot(p[3]).T)
        jac[:, 0, 2] = r[:, 0]
        jac[:, 1, 2] = r[:, 1]
        rp = scale * (pts @ _rot(p[3] + 0.5 * np.pi).T)
        jac[:, 0, 3] = rp[:, 0]
        jac[:, 1, 3] = rp[:, 1]
        return jac

    def compose(self, p, q):
        p, q = self.check(p), self.check(q)
        theta = np.arctan2(np.sin(p[3] + q[3]), np.cos(p[3] + q[3]))
        t = np.exp(p[2]) * (_rot(p[3]) @ q[:2]) + p[:2]
        return np.array([t[0], t[1], p[2] + q[2], theta])

    def invert(self, p):
        p = self.check(p)
        t = -np.exp(-p[2]) * (_rot(-p[3]) @ p[:2])
        return np.array([t[0], t[1], -p[2], -p[3]])

    def fit(self, src, dst):
        src = np.atleast_2d(src)
        dst = np.atleast_2d(dst)
        sc = src - src.mean(axis=0)
        dc = dst - dst.mean(axis=0)
        denom = float(np.sum(sc * sc))
        if denom < 1e-30:
            raise DegenerateWarpError("similitude fit from coincident points")
        dots = float(np.sum(sc * dc))
        cross = float(np.sum(sc[:, 0] * dc[:, 1] - sc[:, 1] * dc[:, 0]))
        scale = np.hypot(dots, cross) / denom
        if scale < 1e-15:
            raise DegenerateWarpError("similitude fit collapses to zero scale")
        theta = np.arctan2(cross, dots)
        t = dst.mean(axis=0) - scale * (_rot(theta) @ src.mean(axis=0))
        return np.array([t[0], t[1], np.log(scale), theta])


class Affine(WarpModel):
    """Affine, parameterized by the 6 row-major entries of (A - I | t)."""

    name = "affine"
    dof = 6

    def _matrix(self, p):
        return np.array([[1.0 + p[0], p[1], p[2]],
                         [p[3], 1.0 + p[4], p[5]],
                         [0.0, 0.0, 1.0]])

    def from_matrix(self, h):
        h = h / h[2, 2]
        return np.array([h[0, 0] - 1.0, h[0, 1], h[0, 2],
                         h[1, 0], h[1, 1] - 1.0, h[1, 2]])

    def param_jacobian(self, p, pts):
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        jac = np.zeros((n, 2, 6))
        jac[:, 0, 0] = pts[:, 0]
        jac[:, 0, 1] = pts[:, 1]
        jac[:, 0, 2] = 1.0
        jac[:, 1, 3] = pts[:, 0]
        jac[:, 1, 4] = pts[:, 1]
        jac[:, 1, 5] = 1.0
        return jac

    def invert(self, p):
        h = self.matrix(self.check(p))
        if abs(np.linalg.det(h[:2, :2])) < SINGULAR_EPS:
            raise SingularWarpError("affine warp is not invertible")
        return self.from_matrix(np.linalg.inv(h))

    def fit(self, src, dst):
        src = np.atleast_2d(src)
        dst = np.atleast_2d(dst)
        n = src.shape[0]
        a = np.zeros((2 * n, 6))
        a[0::2, 0] = src[:, 0]
        a[0::2, 1] = src[:, 1]
        a[0::2, 2] = 1.0
        a[1::2, 3] = src[:, 0]
        a[1::2, 4] = src[:, 1]
        a[1::2, 5] = 1.0
        b = dst.ravel()
        sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
        if rank < 6:
            raise DegenerateWarpError("degenerate points for affine fit")
        sol[0] -= 1.0
        sol[4] -= 1.0
        return sol


class HomographyMatrix(WarpModel):
    """Homography via the 8 row-major entries of H - I (H normalized, H33=1)."""

    name = "hom-matrix"
    dof = 8

    def _matrix(self, p):
        return np.array([[1.0 + p[0], p[1], p[2]],
                         [p[3], 1.0 + p[4], p[5]],
                         [p[6], p[7], 1.0]])

    def from_matrix(self, h):
        if abs(h[2, 2]) < SINGULAR_EPS * max(np.abs(h).max(), 1.0):
            raise SingularWarpError("homography cannot be normalized (H33 ~ 0)")
        h = h / h[2, 2]
        return np.array([h[0, 0] - 1.0, h[0, 1], h[0, 2],
                         h[1, 0], h[1, 1] - 1.0, h[1, 2],
                         h[2, 0], h[2, 1]])

    def param_jacobian(self, p, pts):
        p = self.check(p)
        h = self.matrix(p)
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        d = x * h[2, 0] + y * h[2, 1] + 1.0
        if np.any(np.abs(d) < SINGULAR_EPS):
            raise SingularWarpError("projective denominator below threshold")
        warped = self.apply(p, pts)
        wx, wy = warped[:, 0], warped[:, 1]
        n = pts.shape[0]
        jac = np.zeros((n, 2, 8))
        jac[:, 0, 0] = x / d
        jac[:, 0, 1] = y / d
        jac[:, 0, 2] = 1.0 / d
        jac[:, 0, 6] = -wx * x / d
        jac[:, 0, 7] = -wx * y / d
        jac[:, 1, 3] = x / d
        jac[:, 1, 4] = y / d
        jac[:, 1, 5] = 1.0 / d
        jac[:, 1, 6] = -wy * x / d
        jac[:, 1, 7] = -wy * y / d
        return jac

    def fit(self, src, dst):
        return self.from_matrix(dlt_homography(src, dst))


# sl(3) basis: x/y translation, two shears, two traceless scalings, and the
# two projective generators.
SL3_BASIS = np.zeros((8, 3, 3))
SL3_BASIS[0, 0, 2] = 1.0
SL3_BASIS[1, 1, 2] = 1.0
SL3_BASIS[2, 0, 1] = 1.0
SL3_BASIS[3, 1, 0] = 1.0
SL3_BASIS[4, 0, 0], SL3_BASIS[4, 1, 1] = 1.0, -1.0
SL3_BASIS[5, 1, 1], SL3_BASIS[5, 2, 2] = -1.0, 1.0
SL3_BASIS[6, 2, 0] = 1.0
SL3_BASIS[7, 2, 1] = 1.0


class HomographySL3(WarpModel):
    """Homography via sl(3) coefficients and the matrix exponential."""

    name = "hom-sl3"
    dof = 8

    def _algebra(self, p):
        return np.tensordot(p, SL3_BASIS, axes=(0, 0))

    def _matrix(self, p):
        return expm_fixed(self._algebra(p))

    def from_matrix(self, h):
        det = np.linalg.det(h)
        if det <= 0:
            raise DegenerateWarpError("homography not in SL(3)+ (det <= 0)")
        l = _logm_real(h / np.cbrt(det))
        diag = l.diagonal() - l.trace() / 3.0
        return np.array([l[0, 2], l[1, 2], l[0, 1], l[1, 0],
                         diag[0], diag[2], l[2, 0], l[2, 1]])

    def param_jacobian(self, p, pts):
        p = self.check(p)
        pts = np.atleast_2d(pts)
        n = pts.shape[0]
        jac = np.empty((n, 2, 8))
        if not np.any(p):
            # generator actions on (x, y): derivative of the projective
            # action of exp(t G) at t = 0
            hom = np.column_stack([pts, np.ones(n)])
            for i, g in enumerate(SL3_BASIS):
                num = hom @ g.T
                jac[:, 0, i] = num[:, 0] - pts[:, 0] * num[:, 2]
                jac[:, 1, i] = num[:, 1] - pts[:, 1] * num[:, 2]
            return jac
        a = self._algebra(p)
        h = expm_fixed(a)
        for i, g in enumerate(SL3_BASIS):
            dh = _dexpm(a, g)
            jac[:, :, i] = _projective_direction(h, dh, pts)
        return jac

    def compose(self, p, q):
        return self.from_matrix(self.matrix(self.check(p)) @ self.matrix(self.check(q)))

    def invert(self, p):
        return -self.check(p)

    def fit(self, src, dst):
        return self.from_matrix(dlt_homography(src, dst))


def _projective_direction(h, dh, pts):
    """d(proj(H, x))/dt for H moving along dH, per point (N, 2)."""
    pts = np.atleast_2d(pts)
    hom = np.column_stack([pts, np.ones(pts.shape[0])])
    num = hom @ h.T
    dnum = hom @ dh.T
    d = num[:, 2]
    if np.any(np.abs(d) < SINGULAR_EPS):
        raise SingularWarpError("projective denominator below threshold")
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = (dnum[:, 0] * d - num[:, 0] * dnum[:, 2]) / (d * d)
    out[:, 1] = (dnum[:, 1] * d - num[:, 1] * dnum[:, 2]) / (d * d)
    return out


class HomographyCorners(WarpModel):
    """Homography via the 8 displacements of the canonical square corners."""

    name = "hom-corner"
    dof = 8

    def _system(self, p):
        """8x8 linear system A h = b pinning H (H33 = 1) to the corners."""
        dst = CANONICAL_CORNERS + p.reshape(4, 2)
        if corners_degenerate(dst):
            raise DegenerateWarpError("degenerate warped corner set")
        a = np.zeros((8, 8))
        b = np.zeros(8)
        sx, sy = CANONICAL_CORNERS[:, 0], CANONICAL_CORNERS[:, 1]
        dx, dy = dst[:, 0], dst[:, 1]
        rows = np.arange(4)
        a[2 * rows, 0] = sx
        a[2 * rows, 1] = sy
        a[2 * rows, 2] = 1.0
        a[2 * rows, 6] = -dx * sx
        a[2 * rows, 7] = -dx * sy
        b[2 * rows] = dx
        a[2 * rows + 1, 3] = sx
        a[2 * rows + 1, 4] = sy
        a[2 * rows + 1, 5] = 1.0
        a[2 * rows + 1, 6] = -dy * sx
        a[2 * rows + 1, 7] = -dy * sy
        b[2 * rows + 1] = dy
        return a, b

    def _matrix(self, p):
        a, b = self._system(p)
        try:
            h8 = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise DegenerateWarpError("corner homography is singular") from exc
        return np.array([[h8[0], h8[1], h8[2]],
                         [h8[3], h8[4], h8[5]],
                         [h8[6], h8[7], 1.0]])

    def from_matrix(self, h):
        return (projective_apply(h, CANONICAL_CORNERS) - CANONICAL_CORNERS).ravel()

    def param_jacobian(self, p, pts):
        p = self.check(p)
        a, b = self._system(p)
        ainv = np.linalg.inv(a)
        h8 = ainv @ b
        h = np.array([[h8[0], h8[1], h8[2]],
                      [h8[3], h8[4], h8[5]],
                      [h8[6], h8[7], 1.0]])
        sx, sy = CANONICAL_CORNERS[:, 0], CANONICAL_CORNERS[:, 1]
        rho = h8[6] * sx + h8[7] * sy + 1.0  # implicit-differentiation factor
        pts = np.atleast_2d(pts)
        jac = np.empty((pts.shape[0], 2, 8))
        for j in range(8):
            dh8 = ainv[:, j] * rho[j // 2]
            dh = np.array([[dh8[0], dh8[1], dh8[2]],
                           [dh8[3], dh8[4], dh8[5]],
                           [dh8[6], dh8[7], 0.0]])
            jac[:, :, j] = _projective_direction(h, dh, pts)
        return jac

    def fit(self, src, dst):
        return self.from_matrix(dlt_homography(src, dst))


_MODELS = {}
for _cls in (Translation, Isometry, Similitude, Affine, HomographyMatrix,
             HomographySL3, HomographyCorners):
    _MODELS[_cls.name] = _cls

MODEL_ALIASES = {
    "homography": "hom-matrix",
    "hom": "hom-matrix",
    "sl3": "hom-sl3",
    "corner": "hom-corner",
    "corners": "hom-corner",
}


def model_names():
    return sorted(_MODELS)


def make_model(name):
    key = str(name).strip().lower()
    key = MODEL_ALIASES.get(key, key)
    if key not in _MODELS:
        raise WarpError(f"unknown warp model {name!r}; "
                        f"choose from {model_names()}")
    return _MODELS[key]()


# ---------------------------------------------------------------------------
# functional wrappers (one per operation)

def apply_warp(model, p, pts):
    return model.apply(p, pts)


def update_params(model, p, dp, mode):
    """Additive, compositional or inverse-compositional parameter update."""
    if mode == "additive":
        return model.check(p) + model.check(dp)
    if mode == "compositional":
        return model.compose(p, dp)
    if mode == "inverse-compositional":
        return model.compose(p, model.invert(dp))
    raise WarpError(f"unknown update mode {mode!r}")


def warp_jacobian(model, p, pts):
    return model.param_jacobian(model.check(p), pts)


def invert_params(model, p):
    return model.invert(p)


def fit_params(model, src, dst):
    return model.fit(src, dst)


def sample_warp(model, sigma, rng, max_tries=32):
    return model.sample(sigma, rng, max_tries=max_tries)


# ---------------------------------------------------------------------------
# corner utilities

def corners_from_rect(x, y, width, height):
    return np.array([[x, y],
                     [x + width, y],
                     [x + width, y + height],
                     [x, y + height]], dtype=np.float64)


def format_corners(c):
    """Serialize as 'ulx uly urx ury lrx lry llx lly'."""
    return " ".join(repr(float(v)) for v in _check_corners(c).ravel())


def parse_corners(text):
    parts = text.split()
    if len(parts) != 8:
        raise WarpError(f"expected 8 corner fields, got {len(parts)}")
    return np.array([float(v) for v in parts], dtype=np.float64).reshape(4, 2)

"""Search methods: LK variants, ESM, nearest-neighbor search, NNIC, PF.

All methods share a :class:`SearchState`: the template patch sampled from
frame 0 on the canonical unit-square grid, a fixed base homography that
places the unit square on the initial box, and the warp-model parameters
being tracked (identity at initialization). The full point mapping is

    image point = base(w(grid point, params))

so warp parameters, sampled warps and NN-index warps all live in the
scale-free unit frame while errors and convergence are measured in image
pixels.

Gradient steps are Gauss-Newton-style ascent on the appearance model's
similarity, using the model's convergence curvature in place of the true
Hessian, which extends the classic SSD formulation to every model here.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import am as am_mod
from . import imgproc, ssm

log = logging.getLogger(__name__)

GRADIENT_METHODS = ("falk", "ialk", "fclk", "iclk", "esm")
ALL_METHODS = GRADIENT_METHODS + ("nn", "nnic", "pf")


class TrackingFailure(RuntimeError):
    """Raised when a step cannot produce finite, valid parameters."""


@dataclass
class SMConfig:
    """Runtime knobs shared by the search methods."""

    max_iters: int = 30
    conv_eps: float = 0.001          # corner-change L2 norm, image pixels
    nn_samples: int = 1000
    nn_sigma: float = 0.05           # unit-frame corner sigma for index warps
    nn_trees: int = 6
    nn_leaf_size: int = 64           # checks budget ~ trees * leaf_size
    nn_exact: bool = False
    pf_particles: int = 1000
    pf_sigma: float = 0.05           # unit-frame random-walk sigma
    pf_resample_frac: float = 0.5    # resample when ESS < frac * n
    seed: int = 0

    def validated(self):
        if self.max_iters < 1 or self.conv_eps <= 0:
            raise ValueError("max_iters must be >= 1 and conv_eps > 0")
        if self.nn_samples < 1 or self.nn_sigma <= 0:
            raise ValueError("nn_samples must be >= 1 and nn_sigma > 0")
        if self.pf_particles < 1 or self.pf_sigma <= 0:
            raise ValueError("pf_particles must be >= 1 and pf_sigma > 0")
        return self


class SearchState:
    """Per-tracker mutable search state (never shared across trackers)."""

    def __init__(self, method, model, base_h, grid, template, am, cfg,
                 tpl_pixgrad):
        self.method = method
        self.model = model
        self.base_h = np.asarray(base_h, dtype=np.float64)
        self.grid = grid
        self.template = np.asarray(template, dtype=np.float64)
        self.am = am
        self.cfg = cfg.validated()
        self.params = model.identity()
        self.mapping = None

        pts = grid.points
        self.base_jac0 = ssm.projective_point_jacobian(self.base_h, pts)
        self.tpl_pixgrad = tpl_pixgrad  # (N, 2) template-side gradients
        jac_id = model.param_jacobian(model.identity(), pts)
        # template steepest-descent rows: grad_T' J_base J_w(identity)
        self.tpl_jac = np.einsum("ka,kab,kbs->ks",
                                 tpl_pixgrad, self.base_jac0, jac_id)
        self.iclk_curv = am.conv_curvature(self.template, self.tpl_jac)
        self.index = None
        self.particles = None
        self.weights = None
        self.rng = np.random.default_rng(cfg.seed)

    # -- geometry helpers ----------------------------------------------------
    def warped_points(self, p=None):
        p = self.params if p is None else p
        mid = self.model.apply(p, self.grid.points)
        return mid, ssm.projective_apply(self.base_h, mid)

    def corners_image(self, p=None):
        p = self.params if p is None else p
        mid = self.model.apply(p, ssm.CANONICAL_CORNERS)
        return ssm.projective_apply(self.base_h, mid)

    def sample_candidate(self, frame, p=None):
        _, img_pts = self.warped_points(p)
        return imgproc.sample_patch(frame, img_pts)

    def refresh_mapping(self, frame):
        """Refit the per-frame intensity mapping (SCV family only)."""
        if self.am.needs_mapping:
            self.mapping = self.am.fit_mapping(self.template,
                                               self.sample_candidate(frame))


# ---------------------------------------------------------------------------
# Gauss-Newton machinery

def ascent_step(curv, grad_vec):
    """Solve curvature * delta = -grad with Tikhonov damping on failure."""
    s = grad_vec.shape[0]
    a = -np.asarray(curv, dtype=np.float64)  # PSD for a well-behaved model
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(grad_vec))):
        raise TrackingFailure("non-finite linear system")
    mu = 0.0
    trace = np.trace(a)
    base_mu = 1e-8 * (trace / s if trace > 0 else 1.0)
    for _ in range(12):
        try:
            l = np.linalg.cholesky(a + mu * np.eye(s))
            delta = np.linalg.solve(l.T, np.linalg.solve(l, grad_vec))
            if np.all(np.isfinite(delta)):
                return delta
        except np.linalg.LinAlgError:
            pass
        mu = base_mu if mu == 0.0 else mu * 10.0
    delta, *_ = np.linalg.lstsq(a, grad_vec, rcond=None)
    if not np.all(np.isfinite(delta)):
        raise TrackingFailure("could not solve the step system")
    return delta


def _inv2x2(mats):
    det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    if np.any(np.abs(det) < 1e-12):
        raise TrackingFailure("singular warp point-Jacobian")
    out = np.empty_like(mats)
    out[:, 0, 0] = mats[:, 1, 1]
    out[:, 0, 1] = -mats[:, 0, 1]
    out[:, 1, 0] = -mats[:, 1, 0]
    out[:, 1, 1] = mats[:, 0, 0]
    return out / det[:, None, None]


def current_jacobian(state, frame, variant):
    """Candidate patch and (N, S) intensity Jacobian for one iteration."""
    model, grid = state.model, state.grid
    p = state.params
    mid, img_pts = state.warped_points(p)
    if variant in ("fclk", "esm"):
        c, gx, gy = imgproc.sample_with_gradient(frame, img_pts)
        pixgrad = np.column_stack([gx, gy])
        base_jac = ssm.projective_point_jacobian(state.base_h, mid)
        chain = base_jac @ model.point_jacobian(p, grid.points)
        jac_id = model.param_jacobian(model.identity(), grid.points)
        didp = np.einsum("ka,kab,kbs->ks", pixgrad, chain, jac_id)
    elif variant == "falk":
        c, gx, gy = imgproc.sample_with_gradient(frame, img_pts)
        pixgrad = np.column_stack([gx, gy])
        base_jac = ssm.projective_point_jacobian(state.base_h, mid)
        jac_p = model.param_jacobian(p, grid.points)
        didp = np.einsum("ka,kab,kbs->ks", pixgrad, base_jac, jac_p)
    elif variant == "ialk":
        # Hager-Belhumeur style transfer: template gradients through the
        # inverse point-Jacobian of the current warp (re-derived each
        # iteration, valid for every warp model)
        c = imgproc.sample_patch(frame, img_pts)
        inv_pj = _inv2x2(model.point_jacobian(p, grid.points))
        jac_p = model.param_jacobian(p, grid.points)
        chain = inv_pj @ jac_p
        didp = np.einsum("ka,kab,kbs->ks", state.tpl_pixgrad,
                         state.base_jac0, chain)
    elif variant == "iclk":
        c = imgproc.sample_patch(frame, img_pts)
        didp = state.tpl_jac
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return c, didp


_UPDATE_MODE = {"falk": "additive", "ialk": "additive",
                "fclk": "compositional", "iclk": "inverse-compositional",
                "esm": "compositional"}


def _guarded_update(state, frame, delta, mode, current_sim, max_halvings=6):
    """Apply the update, halving the step while the similarity decreases.

    The convergence curvature underestimates the true curvature for
    coarse-binned histogram models, so raw Gauss-Newton steps can
    overshoot; backtracking keeps every step non-worsening without
    changing well-scaled steps.
    """
    new_p = ssm.update_params(state.model, state.params, delta, mode)
    for _ in range(max_halvings):
        sim = state.am.similarity(state.template,
                                  state.sample_candidate(frame, new_p),
                                  mapping=state.mapping)
        if sim >= current_sim:
            break
        delta = 0.5 * delta
        new_p = ssm.update_params(state.model, state.params, delta, mode)
    return delta, new_p


def lk_step(variant, state, frame):
    """One Gauss-Newton step of a Lucas-Kanade variant.

    Returns (delta, new_params); ``state.params`` is not modified.
    """
    if variant not in ("falk", "ialk", "fclk", "iclk"):
        raise ValueError(f"unknown LK variant {variant!r}")
    c, didp = current_jacobian(state, frame, variant)
    if variant == "iclk":
        g = didp.T @ state.am.grad(state.template, c, wrt="template",
                                   mapping=state.mapping)
        curv = state.iclk_curv
    else:
        g = didp.T @ state.am.grad(state.template, c, wrt="candidate",
                                    mapping=state.mapping)
        curv = state.am.conv_curvature(state.template, didp)
    delta = ascent_step(curv, g)
    sim = state.am.similarity(state.template, c, mapping=state.mapping)
    return _guarded_update(state, frame, delta, _UPDATE_MODE[variant], sim)


def esm_step(state, frame):
    """One extended-ESM step: mean Jacobian, two-sided gradient."""
    c, jac_c = current_jacobian(state, frame, "esm")
    jac_esm = 0.5 * (jac_c + state.tpl_jac)
    g_c = state.am.grad(state.template, c, wrt="candidate",
                        mapping=state.mapping)
    g_t = state.am.grad(state.template, c, wrt="template",
                        mapping=state.mapping)
    g = 0.5 * (jac_c.T @ g_c - state.tpl_jac.T @ g_t)
    curv = state.am.conv_curvature(state.template, jac_esm)
    delta = ascent_step(curv, g)
    sim = state.am.similarity(state.template, c, mapping=state.mapping)
    return _guarded_update(state, frame, delta, "compositional", sim)


def iterate_to_convergence(method, state, frame, cfg=None):
    """Repeat steps until the corner change drops to the epsilon or the
    iteration budget runs out. Returns the final parameters."""
    cfg = state.cfg if cfg is None else cfg
    step = (lambda: esm_step(state, frame)) if method == "esm" else \
        (lambda: lk_step(method, state, frame))
    last_valid = state.params.copy()
    for _ in range(cfg.max_iters):
        corners_before = state.corners_image()
        try:
            _, new_p = step()
            corners_after = state.corners_image(new_p)
        except (ssm.WarpError, TrackingFailure):
            state.params = last_valid
            raise
        if not np.all(np.isfinite(new_p)):
            state.params = last_valid
            raise TrackingFailure("non-finite parameters")
        state.params = new_p
        last_valid = new_p.copy()
        if np.linalg.norm(corners_after - corners_before) <= cfg.conv_eps:
            break
    return state.params


# ---------------------------------------------------------------------------
# nearest-neighbor search

class _RPTree:
    """Random-projection tree over patch embeddings (median splits)."""

    def __init__(self, data, leaf_size, rng):
        self.data = data
        self.leaf_size = max(2, int(leaf_size))
        self.nodes = []
        self._build(np.arange(data.shape[0]), rng)

    def _build(self, idx, rng):
        # nodes: (direction, threshold, left, right) or (None, members,..)
        if idx.size <= self.leaf_size:
            self.nodes.append(("leaf", idx))
            return len(self.nodes) - 1
        direction = rng.normal(size=self.data.shape[1])
        direction /= max(np.linalg.norm(direction), 1e-12)
        proj = self.data[idx] @ direction
        thr = np.median(proj)
        left_mask = proj <= thr
        if left_mask.all() or not left_mask.any():
            self.nodes.append(("leaf", idx))
            return len(self.nodes) - 1
        pos = len(self.nodes)
        self.nodes.append(None)  # placeholder
        left = self._build(idx[left_mask], rng)
        right = self._build(idx[~left_mask], rng)
        self.nodes[pos] = ("split", direction, thr, left, right)
        return pos

    def leaf_members(self, query):
        i = 0
        while True:
            node = self.nodes[i]
            if node[0] == "leaf":
                return node[1]
            _, direction, thr, left, right = node
            i = left if query @ direction <= thr else right


class SampleIndex:
    """Warp-sample database searched under the appearance model's distance.

    Approximate queries pool the leaf members of a few random-projection
    trees (checks budget = trees x leaf size) and re-rank them with the
    true ``nn_distance``; exact mode scans every stored sample. Both modes
    always return a true stored sample and are deterministic for a fixed
    build seed.
    """

    def __init__(self, am, patches, params, cfg, rng):
        self.am = am
        self.patches = patches
        self.params = params
        self.exact = cfg.nn_exact
        self.embed = self._embedding(patches)
        self.trees = []
        if not self.exact:
            for _ in range(max(1, cfg.nn_trees)):
                self.trees.append(_RPTree(self.embed, cfg.nn_leaf_size, rng))

    def _embedding(self, patches):
        # z-scored rows give an exact Euclidean embedding for NCC/ZNCC;
        # other models use raw intensities for the tree routing only
        if self.am.name in ("ncc", "zncc"):
            centered = patches - patches.mean(axis=1, keepdims=True)
            norms = np.maximum(np.linalg.norm(centered, axis=1, keepdims=True),
                               1e-12)
            return centered / norms
        return patches

    def _embed_query(self, patch):
        if self.am.name in ("ncc", "zncc"):
            centered = patch - patch.mean()
            return centered / max(np.linalg.norm(centered), 1e-12)
        return patch

    def candidates(self, patch):
        if self.exact:
            return np.arange(self.patches.shape[0])
        q = self._embed_query(patch)
        pool = np.unique(np.concatenate(
            [tree.leaf_members(q) for tree in self.trees]))
        return pool

    def query(self, patch):
        """Best stored sample id and its nn_distance to the query."""
        cand = self.candidates(patch)
        dists = np.array([self.am.nn_distance(self.patches[i], patch)
                          for i in cand])
        best = int(np.argmin(dists))
        return int(cand[best]), float(dists[best])


def build_index(state, frame0):
    """Build the NN sample index from warped resamples of frame 0.

    Sample 0 is forced to the identity warp; the rest are drawn from the
    unit-frame corner-perturbation distribution with ``nn_sigma``.
    """
    cfg = state.cfg
    model = state.model
    rng = np.random.default_rng(cfg.seed)
    n = cfg.nn_samples
    params = np.empty((n, model.dof))
    patches = np.empty((n, state.grid.n))
    params[0] = model.identity()
    patches[0] = state.sample_candidate(frame0, params[0])
    for i in range(1, n):
        p = ssm.sample_warp(model, cfg.nn_sigma, rng)
        params[i] = p
        patches[i] = state.sample_candidate(frame0, p)
    state.index = SampleIndex(state.am, patches, params, cfg, rng)
    return state.index


def nn_step(state, frame):
    """Match the current patch against the index and jump to the match."""
    if state.index is None:
        raise TrackingFailure("NN index was never built")
    patch = state.sample_candidate(frame)
    best, _ = state.index.query(patch)
    matched = state.index.params[best]
    state.params = ssm.update_params(state.model, state.params, matched,
                                     "inverse-compositional")
    return state.params


# ---------------------------------------------------------------------------
# particle filter

def init_particles(state):
    cfg = state.cfg
    state.particles = np.tile(state.params, (cfg.pf_particles, 1))
    state.weights = np.full(cfg.pf_particles, 1.0 / cfg.pf_particles)
    tvar = float(np.var(state.template))
    state.pf_lambda = 1.0 / (2.0 * max(tvar, 1e-6))
    return state.particles


def _systematic_resample(weights, rng):
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions)


def pf_step(state, frame):
    """Random-walk particle filter step; returns the weighted mean params."""
    if state.particles is None:
        init_particles(state)
    cfg = state.cfg
    n = cfg.pf_particles
    state.particles = state.particles + state.rng.normal(
        0.0, cfg.pf_sigma, size=state.particles.shape)
    sims = np.empty(n)
    for i in range(n):
        patch = state.sample_candidate(frame, state.particles[i])
        sims[i] = state.am.similarity(state.template, patch,
                                      mapping=state.mapping)
    loglike = state.pf_lambda * (sims - sims.max())
    like = np.exp(np.maximum(loglike, -700.0))
    weights = state.weights * like
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        log.warning("particle filter: all weights vanished; resetting uniform")
        weights = np.full(n, 1.0 / n)
    else:
        weights = weights / total
    state.weights = weights
    mean = weights @ state.particles
    ess = 1.0 / float(weights @ weights)
    if ess < cfg.pf_resample_frac * n:
        keep = _systematic_resample(weights, state.rng)
        state.particles = state.particles[keep]
        state.weights = np.full(n, 1.0 / n)
    state.params = mean
    return state.params


# ---------------------------------------------------------------------------
# frame-level dispatch

def run_frame(state, frame):
    """Advance the search state by one frame; returns the new parameters."""
    method = state.method
    if method not in ALL_METHODS:
        raise ValueError(f"unknown search method {method!r}")
    state.refresh_mapping(frame)
    if method == "pf":
        return pf_step(state, frame)
    if method in ("nn", "nnic"):
        nn_step(state, frame)
        if method == "nn":
            return state.params
        state.refresh_mapping(frame)  # patch moved; refit before refining
        return iterate_to_convergence("iclk", state, frame)
    return iterate_to_convergence(method, state, frame)

"""Tracker composition: bind one appearance model, one search method and
one warp model into a runnable per-frame tracker.

A tracker is created from the first frame and the initial box corners: the
frame is smoothed, a base homography is fitted from the canonical unit
square to the box, the template is sampled on the unit grid, and the
search method's caches (template Jacobians, NN index, particles) are
initialized. Warp parameters start at the identity, so the frame-0 output
corners equal the initial corners for every warp model.

Tracking failures are never raised from ``track_frame``; they surface as
``status='diverged'`` with the last valid corners.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import am as am_mod
from . import sm as sm_mod
from . import imgproc, ssm


class TrackerConfigError(ValueError):
    pass


@dataclass
class TrackerSpec:
    """A named AM x SM x SSM combination plus runtime parameters."""

    am: str = "ssd"
    sm: str = "fclk"
    ssm: str = "homography"
    resolution: tuple = (50, 50)
    bins: int = 8
    subgrid: tuple = (3, 3)
    smooth_kernel: int = 5
    smooth_sigma: float = None
    sm_cfg: sm_mod.SMConfig = field(default_factory=sm_mod.SMConfig)
    allow_experimental: bool = False

    @property
    def label(self):
        return f"{self.am}+{self.sm}+{self.ssm}"

    def validate(self):
        if self.am.lower() not in am_mod.am_names():
            raise TrackerConfigError(f"unknown appearance model {self.am!r}")
        if self.sm.lower() not in sm_mod.ALL_METHODS:
            raise TrackerConfigError(f"unknown search method {self.sm!r}")
        ssm.make_model(self.ssm)  # raises on unknown
        if self.sm.lower() == "pf" and not self.allow_experimental:
            kind = ssm.MODEL_ALIASES.get(self.ssm.lower(), self.ssm.lower())
            if kind != "translation":
                raise TrackerConfigError(
                    "PF is restricted to the translation model "
                    "(set allow_experimental to override)")
        nx, ny = self.resolution
        if nx < 2 or ny < 2:
            raise TrackerConfigError(f"bad sampling resolution {self.resolution}")
        return self


@dataclass
class TrackerOutput:
    corners: np.ndarray          # (4, 2) image coordinates
    params: np.ndarray
    status: str                  # 'ok' | 'diverged'
    seconds: float               # tracker-only wall time for this frame

    @property
    def ok(self):
        return self.status == "ok"


class Tracker:
    """Single-object tracker; exclusively owned, one per sequence."""

    def __init__(self, spec, first_frame, init_corners):
        spec.validate()
        self.spec = spec
        corners = np.asarray(init_corners, dtype=np.float64)
        if ssm.corners_degenerate(corners):
            raise TrackerConfigError("initial corners are degenerate")
        frame = imgproc.as_gray_image(first_frame)
        smoothed = imgproc.gaussian_smooth(frame, spec.smooth_kernel,
                                           spec.smooth_sigma)
        self.model = ssm.make_model(spec.ssm)
        self.am = am_mod.make_am(spec.am, nbins=spec.bins,
                                 subgrid=spec.subgrid,
                                 resolution=spec.resolution)
        base_h = ssm.dlt_homography(ssm.CANONICAL_CORNERS, corners)
        self.grid = imgproc.SampleGrid.unit(*spec.resolution)
        tpl_pts = ssm.projective_apply(base_h, self.grid.points)
        template, gx, gy = imgproc.sample_with_gradient(smoothed, tpl_pts)
        self.state = sm_mod.SearchState(
            spec.sm.lower(), self.model, base_h, self.grid, template,
            self.am, spec.sm_cfg, np.column_stack([gx, gy]))
        self.image_shape = frame.shape
        self.frame_index = 0
        self.diverged = False
        if self.state.method in ("nn", "nnic"):
            sm_mod.build_index(self.state, smoothed)
        elif self.state.method == "pf":
            sm_mod.init_particles(self.state)

    @property
    def template(self):
        return self.state.template

    @property
    def params(self):
        return self.state.params

    def corners(self):
        return self.state.corners_image()

    def set_corners(self, corners):
        """Force the state to the warp best fitting the given box."""
        target = self.model.fit(
            ssm.CANONICAL_CORNERS,
            ssm.projective_apply(np.linalg.inv(self.state.base_h), corners))
        self.state.params = target
        return self.state.params

    def _diverged(self, corners):
        if not np.all(np.isfinite(corners)):
            return True
        span = max(np.ptp(corners[:, 0]), np.ptp(corners[:, 1]))
        if span < 2.0:
            return True
        h, w = self.image_shape
        if (corners[:, 0] < -w).any() or (corners[:, 0] > 2 * w).any() or \
           (corners[:, 1] < -h).any() or (corners[:, 1] > 2 * h).any():
            return True
        return False

    def track_frame(self, frame):
        """Track one frame; returns a TrackerOutput (never raises)."""
        frame = imgproc.as_gray_image(frame)
        self.frame_index += 1
        start = time.perf_counter()
        status = "ok"
        if self.diverged:
            status = "diverged"  # no re-initialization after divergence
        else:
            before = self.state.params.copy()
            try:
                smoothed = imgproc.gaussian_smooth(
                    frame, self.spec.smooth_kernel, self.spec.smooth_sigma)
                sm_mod.run_frame(self.state, smoothed)
            except (ssm.WarpError, sm_mod.TrackingFailure):
                self.state.params = before
                status = "diverged"
            if status == "ok":
                try:
                    corners = self.state.corners_image()
                except ssm.WarpError:
                    corners = np.full((4, 2), np.nan)
                if self._diverged(corners):
                    self.state.params = before
                    status = "diverged"
            if status == "diverged":
                self.diverged = True
        elapsed = max(time.perf_counter() - start, 1e-9)
        return TrackerOutput(self.corners().copy(), self.state.params.copy(),
                             status, elapsed)


def create_tracker(spec, first_frame, init_corners):
    return Tracker(spec, first_frame, init_corners)


def track_frame(tracker, frame):
    return tracker.track_frame(frame)

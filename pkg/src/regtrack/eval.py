"""Evaluation protocol: alignment error, success rates, ground-truth
projection, sequence I/O and synthetic-sequence generation.

The alignment error between two corner sets is the RMS of the four
corner-to-corner Euclidean distances. Success rate pools frames across
sequences: SR(t) = |{frames with error < t}| / |frames|, with the first
frame of every sequence excluded (trackers are initialized there) and
diverged frames counted as error +inf.

Ground-truth files are plain text: a header line naming the columns, then
one line per frame with the frame filename and the 8 corner coordinates
in the order ulx uly urx ury lrx lry llx lly.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import imgproc, ssm

GT_HEADER = "frame ulx uly urx ury lrx lry llx lly"
DEFAULT_THRESHOLDS = np.arange(0.0, 20.0 + 0.25, 0.5)  # 0..20 step 0.5


class EvalError(ValueError):
    pass


def alignment_error(a, b):
    """RMS of the four corner-to-corner distances, in pixels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (4, 2) or b.shape != (4, 2):
        raise EvalError("corner sets must be (4, 2) arrays")
    d2 = np.sum((a - b) ** 2, axis=1)
    return float(np.sqrt(d2.mean()))


def mean_corner_error(a, b):
    """Mean Euclidean corner distance (cross-paper comparison option)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


@dataclass
class EvalRecord:
    """Per-frame alignment errors of one tracker on one sequence.

    The first frame is excluded; diverged frames carry error +inf.
    """

    sequence: str
    errors: np.ndarray
    statuses: list = field(default_factory=list)
    seconds: np.ndarray = None

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if np.any(self.errors < 0):
            raise EvalError("alignment errors must be non-negative")

    def __len__(self):
        return self.errors.size

    @property
    def fps(self):
        if self.seconds is None or self.seconds.size == 0:
            return float("nan")
        return float(len(self) / self.seconds.sum())


def _pool_errors(records):
    if isinstance(records, EvalRecord):
        records = [records]
    records = list(records)
    if not records:
        raise EvalError("no evaluation records given")
    return np.concatenate([r.errors for r in records])


def success_rate(records, t_p):
    """Fraction of pooled frames with error strictly below ``t_p``."""
    if t_p < 0:
        raise EvalError(f"threshold must be non-negative, got {t_p}")
    pooled = _pool_errors(records)
    return float(np.count_nonzero(pooled < t_p) / pooled.size)


@dataclass
class SRCurve:
    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(np.diff(self.values) < 0):
            raise EvalError("success-rate curve must be non-decreasing")


def sr_curve(records, thresholds=None):
    thresholds = DEFAULT_THRESHOLDS if thresholds is None else \
        np.asarray(thresholds, dtype=np.float64)
    pooled = _pool_errors(records)
    values = np.array([np.count_nonzero(pooled < t) / pooled.size
                       for t in thresholds])
    return SRCurve(thresholds, values)


# ---------------------------------------------------------------------------
# sequences

class Sequence:
    """Ordered frames plus per-frame ground-truth corners.

    Frames are held either as in-memory arrays or as paths loaded on
    access; both expose ``frame(i)``.
    """

    def __init__(self, name, gt, frames=None, frame_paths=None):
        self.name = name
        self.gt = np.asarray(gt, dtype=np.float64)
        if self.gt.ndim != 3 or self.gt.shape[1:] != (4, 2):
            raise EvalError(f"ground truth must be (F, 4, 2), got {self.gt.shape}")
        if not np.all(np.isfinite(self.gt)):
            raise EvalError("ground truth contains non-finite corners")
        self._frames = frames
        self.frame_paths = frame_paths
        count = len(frames) if frames is not None else len(frame_paths)
        if count != self.gt.shape[0]:
            raise EvalError(f"{name}: {count} frames but {self.gt.shape[0]} "
                            "ground-truth entries")

    def __len__(self):
        return self.gt.shape[0]

    def frame(self, i):
        if self._frames is not None:
            return self._frames[i]
        return imgproc.load_image(self.frame_paths[i])

    def frame_name(self, i):
        if self.frame_paths is not None:
            return os.path.basename(self.frame_paths[i])
        return f"frame{i:05d}.pgm"


def load_sequence(path, gt_name="ground_truth.txt"):
    """Load a sequence directory (frames + ground-truth text file)."""
    path = os.fspath(path)
    gt_path = os.path.join(path, gt_name)
    if not os.path.isfile(gt_path):
        raise EvalError(f"missing ground-truth file {gt_path}")
    names = []
    corners = []
    with open(gt_path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1:
                if line.split() != GT_HEADER.split():
                    raise EvalError(f"{gt_path}:1: bad header {line!r}")
                continue
            parts = line.split(" ")
            if len(parts) != 9:
                raise EvalError(f"{gt_path}:{lineno}: expected 9 fields, "
                                f"got {len(parts)}")
            try:
                corners.append(ssm.parse_corners(" ".join(parts[1:])))
            except (ValueError, ssm.WarpError) as exc:
                raise EvalError(f"{gt_path}:{lineno}: {exc}") from exc
            names.append(parts[0])
    if not names:
        raise EvalError(f"{gt_path}: no frames listed")
    frame_paths = [os.path.join(path, n) for n in names]
    missing = [p for p in frame_paths if not os.path.isfile(p)]
    if missing:
        raise EvalError(f"{path}: missing frame files, e.g. {missing[0]}")
    return Sequence(os.path.basename(os.path.abspath(path)),
                    np.stack(corners), frame_paths=frame_paths)


def write_ground_truth(path, names, corners):
    """Write a ground-truth file (text, round-trips bit-identically)."""
    corners = np.asarray(corners, dtype=np.float64)
    if len(names) != corners.shape[0]:
        raise EvalError("frame-name and corner counts differ")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(GT_HEADER + "\n")
        for name, c in zip(names, corners):
            fh.write(f"{name} {ssm.format_corners(c)}\n")
    os.replace(tmp, path)


def save_sequence(seq, out_dir):
    """Write frames as PGM plus the ground-truth file."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for i in range(len(seq)):
        name = seq.frame_name(i)
        imgproc.write_pgm(os.path.join(out_dir, name), seq.frame(i))
        names.append(name)
    write_ground_truth(os.path.join(out_dir, "ground_truth.txt"),
                       names, seq.gt)


# ---------------------------------------------------------------------------
# low-DOF ground-truth projection

def project_ground_truth(model, seq):
    """Least-squares projection of the ground truth onto a warp model.

    Per frame, the model is fitted from the initial corners to the frame
    corners and applied back to the initial corners, so the projected box
    is the best the model can represent.
    """
    initial = seq.gt[0]
    if ssm.corners_degenerate(initial):
        raise EvalError(f"{seq.name}: degenerate initial corners")
    projected = np.empty_like(seq.gt)
    projected[0] = initial
    for i in range(1, len(seq)):
        p = model.fit(initial, seq.gt[i])
        projected[i] = model.apply(p, initial)
    return Sequence(seq.name, projected, frames=seq._frames,
                    frame_paths=seq.frame_paths)


# ---------------------------------------------------------------------------
# synthetic sequences

def textured_image(height=240, width=320, seed=0, smooth=9, low=20.0,
                   high=235.0):
    """Smooth seeded random texture with full intensity range."""
    rng = np.random.default_rng(seed)
    img = rng.standard_normal((height, width))
    img = imgproc.gaussian_smooth(img * 100.0, smooth, smooth / 4.0)
    lo, hi = img.min(), img.max()
    return low + (img - lo) * (high - low) / max(hi - lo, 1e-12)


class SynthBoundsError(EvalError):
    pass


def synth_sequence(base, model, motions, init_corners, photometric="none",
                   noise_sigma=0.0, seed=0, gain_range=(0.7, 1.3),
                   bias_range=(-30.0, 30.0), name="synth"):
    """Generate a sequence by inverse-warping a base image.

    ``motions`` is the per-frame list of unit-frame warp parameters for
    ``model`` (frame 0 is always the identity); the ground-truth box of
    frame t is the initial box moved by motion t, and the box content is
    the frame-0 template up to the photometric transform and noise.

    photometric: 'none', 'gain_bias' (one global gain/bias per frame) or
    'subregion_gain' (smooth horizontal gain field, per-frame strength).
    """
    base = imgproc.as_gray_image(base)
    h, w = base.shape
    init_corners = np.asarray(init_corners, dtype=np.float64)
    base_h = ssm.dlt_homography(ssm.CANONICAL_CORNERS, init_corners)
    base_h_inv = np.linalg.inv(base_h)
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w]
    pix = np.column_stack([xs.ravel().astype(np.float64),
                           ys.ravel().astype(np.float64)])
    frames = []
    gt = []
    for t, p in enumerate([model.identity()] + list(motions)):
        corners = ssm.projective_apply(
            base_h, model.apply(p, ssm.CANONICAL_CORNERS))
        if (corners[:, 0] < 1).any() or (corners[:, 0] > w - 2).any() or \
           (corners[:, 1] < 1).any() or (corners[:, 1] > h - 2).any():
            raise SynthBoundsError(f"frame {t}: warped box leaves the base image")
        gt.append(corners)
        if t == 0:
            frames.append(base.copy())
            continue
        phi_inv = base_h @ np.linalg.inv(model.matrix(p)) @ base_h_inv
        src = ssm.projective_apply(phi_inv, pix)
        frame = imgproc.sample_patch(base, src).reshape(h, w)
        if photometric == "gain_bias":
            gain = rng.uniform(*gain_range)
            bias = rng.uniform(*bias_range)
            frame = gain * frame + bias
        elif photometric == "subregion_gain":
            gain_l = rng.uniform(*gain_range)
            gain_r = rng.uniform(*gain_range)
            ramp = np.linspace(gain_l, gain_r, w)[None, :]
            frame = frame * ramp
        elif photometric != "none":
            raise EvalError(f"unknown photometric mode {photometric!r}")
        if noise_sigma > 0:
            frame = frame + rng.normal(0.0, noise_sigma, frame.shape)
        frames.append(np.clip(frame, 0.0, 255.0))
    return Sequence(name, np.stack(gt), frames=frames)


def random_walk_motions(model, n_frames, sigma, seed, per_frame=True):
    """Cumulative unit-frame random-walk motions for ``model``.

    Each step perturbs the current warped corners by a Gaussian of the
    given unit-frame sigma and refits the model, so consecutive frames
    move by about ``sigma`` regardless of how far the walk has drifted.
    """
    rng = np.random.default_rng(seed)
    motions = []
    p = model.identity()
    for _ in range(n_frames):
        step = ssm.sample_warp(model, sigma, rng)
        p = model.compose(p, step) if per_frame else step
        motions.append(p)
    return motions


def drift_motions(model, n_frames, target_params):
    """Linear interpolation from identity to ``target_params``."""
    target = model.check(np.asarray(target_params, dtype=np.float64))
    return [target * (i / n_frames) for i in range(1, n_frames + 1)]

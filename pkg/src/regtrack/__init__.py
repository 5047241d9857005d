"""Modular registration-based tracking.

Trackers are assembled from three interchangeable parts: an appearance
model (the similarity score), a search method (the optimizer) and a warp
model (the motion parameterization). Any combination can be instantiated
through :class:`regtrack.pipeline.TrackerSpec` and evaluated with the
alignment-error / success-rate harness in :mod:`regtrack.eval`.
"""

from ._kernels import BACKEND as kernel_backend
from .am import am_names, make_am
from .eval import (EvalRecord, Sequence, alignment_error, load_sequence,
                   project_ground_truth, sr_curve, success_rate,
                   synth_sequence)
from .imgproc import SampleGrid, gaussian_smooth, image_gradient, sample_patch
from .pipeline import Tracker, TrackerOutput, TrackerSpec, create_tracker
from .sm import SMConfig
from .ssm import (CANONICAL_CORNERS, corners_from_rect, fit_params,
                  make_model, model_names)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CANONICAL_CORNERS", "EvalRecord", "SMConfig", "SampleGrid",
    "Sequence", "Tracker", "TrackerOutput", "TrackerSpec", "alignment_error",
    "am_names", "corners_from_rect", "create_tracker", "fit_params",
    "gaussian_smooth", "image_gradient", "kernel_backend", "load_sequence",
    "make_am", "make_model", "model_names", "project_ground_truth",
    "sample_patch", "sr_curve", "success_rate", "synth_sequence",
]

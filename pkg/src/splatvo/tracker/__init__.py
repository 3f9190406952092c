"""Direct visual odometry: pixel selection, two-frame alignment, windowed
photometric bundle adjustment, and depth fusion."""

from .align import AlignReport, align_frame, robust_align
from .ba import BAReport, solve_schur, windowed_ba
from .depth import DepthSearchResult, fuse_depth, search_idepth
from .keyframe import KeyframeScore, keyframe_decision
from .residual import (
    HUBER_DELTA,
    OUTLIER_ENERGY,
    PATTERN,
    huber_energy,
    huber_weight,
    photometric_residual,
    prepare_host_points,
    warp_residuals,
)
from .select import select_pixels
from .types import (
    STATUS_ACTIVE,
    STATUS_CANDIDATE,
    STATUS_OUTLIER,
    Keyframe,
    Window,
    make_keyframe,
)

__all__ = [
    "AlignReport",
    "BAReport",
    "DepthSearchResult",
    "HUBER_DELTA",
    "Keyframe",
    "KeyframeScore",
    "OUTLIER_ENERGY",
    "PATTERN",
    "STATUS_ACTIVE",
    "STATUS_CANDIDATE",
    "STATUS_OUTLIER",
    "Window",
    "align_frame",
    "fuse_depth",
    "huber_energy",
    "huber_weight",
    "keyframe_decision",
    "make_keyframe",
    "photometric_residual",
    "prepare_host_points",
    "robust_align",
    "search_idepth",
    "select_pixels",
    "solve_schur",
    "warp_residuals",
    "windowed_ba",
]

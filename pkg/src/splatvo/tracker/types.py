"""Tracker data model: keyframes with semi-dense points and the sliding
window.

Point status: 0 = candidate (freshly selected, depth from the epipolar
search), 1 = active (participates in bundle adjustment), 2 = outlier.
Poses are world-from-camera; (a, b) are the affine brightness parameters of
the photometric residual; exposure is the frame's exposure time in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Image, ImagePyramid, Pose, build_pyramid, image_gradient
from ..dataset import FrameRecord

STATUS_CANDIDATE = 0
STATUS_ACTIVE = 1
STATUS_OUTLIER = 2


@dataclass
class Keyframe:
    kf_id: int
    timestamp: float
    pyramid: ImagePyramid  # intensity pyramid
    color: np.ndarray  # (H, W, 3) level-0 RGB (for splat colors)
    grad0: np.ndarray  # (H, W, 2) level-0 intensity gradient
    pose: Pose
    a: float = 0.0
    b: float = 0.0
    exposure: float = 1.0
    px: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    idepth: np.ndarray = field(default_factory=lambda: np.zeros(0))
    idepth_var: np.ndarray = field(default_factory=lambda: np.zeros(0))
    status: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    rendered_depth: np.ndarray | None = None  # cached splat-map depth, 0 = none
    rendered_alpha: np.ndarray | None = None
    version: int = 0

    @property
    def image0(self) -> np.ndarray:
        return self.pyramid.level(0)

    def active_mask(self) -> np.ndarray:
        return (self.status == STATUS_ACTIVE) & (self.idepth > 0)

    def brightness_scale_from(self, host: "Keyframe") -> float:
        """Scale factor (t_self e^{a_self}) / (t_host e^{a_host})."""
        return (self.exposure * np.exp(self.a)) / (host.exposure * np.exp(host.a))


def make_keyframe(
    kf_id: int,
    frame: FrameRecord,
    pose: Pose,
    num_levels: int = 4,
    a: float = 0.0,
    b: float = 0.0,
) -> Keyframe:
    intensity = frame.image.to_intensity().data
    color = frame.image.data if frame.image.channels == 3 else np.repeat(
        frame.image.data[:, :, None], 3, axis=2
    )
    return Keyframe(
        kf_id=kf_id,
        timestamp=frame.timestamp,
        pyramid=build_pyramid(intensity, num_levels),
        color=color,
        grad0=image_gradient(intensity),
        pose=pose,
        a=a,
        b=b,
        exposure=frame.exposure,
    )


class Window:
    """Sliding window of at most `capacity` keyframes, oldest first.

    The two oldest members are the gauge: bundle adjustment holds their poses
    and brightness parameters fixed.
    """

    def __init__(self, capacity: int = 7):
        if capacity < 3:
            raise ValueError("window capacity must be >= 3")
        self.capacity = capacity
        self.keyframes: list[Keyframe] = []

    def __len__(self) -> int:
        return len(self.keyframes)

    def __iter__(self):
        return iter(self.keyframes)

    def insert(self, kf: Keyframe):
        """Append a keyframe; returns the dropped oldest one, if any."""
        self.keyframes.append(kf)
        if len(self.keyframes) > self.capacity:
            return self.keyframes.pop(0)
        return None

    def latest(self) -> Keyframe:
        return self.keyframes[-1]

    def fixed_ids(self) -> set:
        return {kf.kf_id for kf in self.keyframes[:2]}

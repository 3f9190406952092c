"""Waypoint trajectories and sequence generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Image, Intrinsics, Pose, interpolate
from ..errors import InvalidTrajectory
from .scene import SceneSpec, render_scene


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoints (timestamp, Pose); interpolation is linear on the SE(3) tangent."""

    timestamps: tuple
    poses: tuple

    def __post_init__(self):
        if len(self.timestamps) < 2 or len(self.timestamps) != len(self.poses):
            raise InvalidTrajectory("need >= 2 waypoints with matching timestamps")
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if np.any(np.diff(ts) <= 0):
            raise InvalidTrajectory("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", tuple(float(t) for t in ts))
        object.__setattr__(self, "poses", tuple(self.poses))

    @property
    def t_start(self) -> float:
        return self.timestamps[0]

    @property
    def t_end(self) -> float:
        return self.timestamps[-1]

    def pose_at(self, t: float) -> Pose:
        ts = self.timestamps
        if t <= ts[0]:
            return self.poses[0]
        if t >= ts[-1]:
            return self.poses[-1]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        alpha = (t - ts[k]) / (ts[k + 1] - ts[k])
        return interpolate(self.poses[k], self.poses[k + 1], alpha)


@dataclass(frozen=True)
class FrameRecord:
    """One observed frame; ground-truth fields are None for real data."""

    timestamp: float
    image: Image
    exposure: float = 1.0
    gt_pose: Pose | None = None
    gt_depth: Image | None = None

    def __post_init__(self):
        if self.exposure <= 0:
            raise ValueError("exposure must be positive")


def render_ground_truth(
    scene: SceneSpec,
    pose: Pose,
    K: Intrinsics,
    exposure: float = 1.0,
    timestamp: float = 0.0,
    reference_exposure: float = 1.0,
    supersample: int = 2,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> FrameRecord:
    """Render one frame with exact pose and depth ground truth attached."""
    rgb, depth = render_scene(
        scene,
        pose,
        K,
        exposure=exposure,
        reference_exposure=reference_exposure,
        supersample=supersample,
        noise_sigma=noise_sigma,
        rng=rng,
    )
    return FrameRecord(
        timestamp=timestamp, image=rgb, exposure=exposure, gt_pose=pose, gt_depth=depth
    )


def generate_sequence(
    scene: SceneSpec,
    traj: TrajectorySpec,
    K: Intrinsics,
    fps: float,
    exposure_fn=None,
    supersample: int = 2,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> list:
    """Uniformly sampled frames over [t_start, t_end) with interpolated poses.

    exposure_fn(t) -> seconds; defaults to constant 1.0. Deterministic for a
    fixed seed (noise uses one generator across the sequence).
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    span = traj.t_end - traj.t_start
    n = int(round(span * fps))
    if n < 1:
        raise InvalidTrajectory("trajectory span too short for the frame rate")
    rng = np.random.default_rng(seed) if noise_sigma > 0 else None
    frames = []
    for k in range(n):
        t = traj.t_start + k / fps
        exposure = float(exposure_fn(t)) if exposure_fn is not None else 1.0
        frames.append(
            render_ground_truth(
                scene,
                traj.pose_at(t),
                K,
                exposure=exposure,
                timestamp=t,
                supersample=supersample,
                noise_sigma=noise_sigma,
                rng=rng,
            )
        )
    return frames

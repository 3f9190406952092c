"""Reference synthetic scenes: a desk-scale corner of textured planes with
an orbit trajectory, plus a textureless variant for the degradation path."""

from __future__ import annotations

import numpy as np

from ..core import Intrinsics, Pose
from .scene import Patch, SceneSpec
from .trajectory import TrajectorySpec, generate_sequence

REFERENCE_SIZE = 128
REFERENCE_FRAMES = 120
REFERENCE_FPS = 30.0


def reference_intrinsics(size: int = REFERENCE_SIZE) -> Intrinsics:
    f = size * 110.0 / 128.0
    c = (size - 1) / 2.0
    return Intrinsics(f, f, c, c, size, size)


def look_at(position, target, seed_axis=(0.0, 1.0, 0.0)) -> Pose:
    """World-from-camera pose with +z toward `target` (y points down)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    down = np.asarray(seed_axis, dtype=np.float64)
    right = np.cross(down, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=1)
    return Pose(R, position)


def desk_corner_scene(seed: int = 0, textured: bool = True) -> SceneSpec:
    """Back wall + side wall + floor + two boards, blob densities tuned so
    projected structure spacing is ~8-12 px at the reference resolution."""
    tex = "blobs" if textured else "flat"
    patches = [
        Patch(  # back wall
            origin=np.array([-2.4, -1.8, 2.7]),
            edge_u=np.array([4.8, 0.0, 0.0]),
            edge_v=np.array([0.0, 3.6, 0.0]),
            texture=tex, blob_count=420, blob_sigma=(0.006, 0.022),
            albedo=(0.95, 0.9, 0.85), seed=seed * 11 + 1,
        ),
        Patch(  # side wall
            origin=np.array([-1.9, -1.8, 0.4]),
            edge_u=np.array([0.0, 0.0, 2.4]),
            edge_v=np.array([0.0, 3.6, 0.0]),
            texture=tex, blob_count=260, blob_sigma=(0.008, 0.03),
            albedo=(0.85, 0.9, 0.96), seed=seed * 11 + 2,
        ),
        Patch(  # floor
            origin=np.array([-2.4, 1.1, 0.4]),
            edge_u=np.array([4.8, 0.0, 0.0]),
            edge_v=np.array([0.0, 0.0, 2.4]),
            texture=tex, blob_count=300, blob_sigma=(0.007, 0.025),
            albedo=(0.9, 0.95, 0.85), seed=seed * 11 + 3,
        ),
        Patch(  # tilted board
            origin=np.array([0.25, -0.75, 2.2]),
            edge_u=np.array([1.2, 0.0, -0.35]),
            edge_v=np.array([0.0, 1.1, 0.12]),
            texture="checker" if textured else "flat", checker_period=0.25,
            albedo=(0.95, 0.8, 0.75), seed=seed * 11 + 4,
        ),
        Patch(  # near board
            origin=np.array([-1.15, -0.25, 1.75]),
            edge_u=np.array([0.9, 0.0, 0.2]),
            edge_v=np.array([0.05, 0.85, 0.0]),
            texture=tex, blob_count=110, blob_sigma=(0.015, 0.06),
            albedo=(0.8, 0.85, 0.95), seed=seed * 11 + 5,
        ),
    ]
    return SceneSpec(patches=tuple(patches))


def orbit_trajectory(
    arc_deg: float = 26.0,
    radius: float = 2.1,
    center=(0.0, -0.1, 2.2),
    duration: float = REFERENCE_FRAMES / REFERENCE_FPS,
    bob: float = 0.08,
    n_waypoints: int = 9,
) -> TrajectorySpec:
    """Arc around the scene center with a slight vertical bob and breathing
    radius; the camera keeps looking at the center."""
    center = np.asarray(center, dtype=np.float64)
    angles = np.deg2rad(np.linspace(-arc_deg / 2, arc_deg / 2, n_waypoints))
    times = np.linspace(0.0, duration, n_waypoints)
    poses = []
    for i, th in enumerate(angles):
        offset = np.array(
            [
                radius * np.sin(th),
                bob * np.sin(2.5 * th / max(np.deg2rad(arc_deg / 2), 1e-6)),
                -radius * np.cos(th) * (1.0 + 0.04 * np.sin(3.0 * th)),
            ]
        )
        poses.append(look_at(center + offset, center))
    return TrajectorySpec(timestamps=tuple(times), poses=tuple(poses))


def reference_sequence(
    seed: int = 0,
    n_frames: int = REFERENCE_FRAMES,
    size: int = REFERENCE_SIZE,
    noise_sigma: float = 0.0,
    textured: bool = True,
    arc_deg: float = 26.0,
):
    """The reference synthetic suite: (frames, K, scene, trajectory)."""
    K = reference_intrinsics(size)
    scene = desk_corner_scene(seed, textured=textured)
    duration = n_frames / REFERENCE_FPS
    traj = orbit_trajectory(arc_deg=arc_deg, duration=duration)
    frames = generate_sequence(
        scene, traj, K, fps=REFERENCE_FPS, noise_sigma=noise_sigma, seed=seed
    )
    return frames, K, scene, traj

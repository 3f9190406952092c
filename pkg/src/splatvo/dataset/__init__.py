"""Synthetic scene generation with exact ground truth plus sequence I/O."""

from .io import (
    DEPTH_SCALE,
    load_dataset,
    load_image,
    load_image_sequence,
    read_calib,
    read_times,
    read_trajectory,
    save_depth,
    save_image,
    write_calib,
    write_dataset,
    write_times,
    write_trajectory,
)
from .presets import (
    desk_corner_scene,
    look_at,
    orbit_trajectory,
    reference_intrinsics,
    reference_sequence,
)
from .scene import Patch, SceneSpec, render_scene
from .trajectory import FrameRecord, TrajectorySpec, generate_sequence, render_ground_truth

__all__ = [
    "DEPTH_SCALE",
    "desk_corner_scene",
    "look_at",
    "orbit_trajectory",
    "reference_intrinsics",
    "reference_sequence",
    "FrameRecord",
    "Patch",
    "SceneSpec",
    "TrajectorySpec",
    "generate_sequence",
    "load_dataset",
    "load_image",
    "load_image_sequence",
    "read_calib",
    "read_times",
    "read_trajectory",
    "render_ground_truth",
    "render_scene",
    "save_depth",
    "save_image",
    "write_calib",
    "write_dataset",
    "write_times",
    "write_trajectory",
]

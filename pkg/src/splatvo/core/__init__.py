"""Geometry, camera, and image primitives shared by all modules.

All types here are immutable after construction and safe to share between
threads; the operations are pure functions.
"""

from .camera import Intrinsics, pixel_rays, project, unproject
from .image import (
    Image,
    ImagePyramid,
    bilinear_sample,
    build_pyramid,
    downsample2,
    image_gradient,
)
from .se3 import Pose, hat, interpolate, se3_exp, se3_log, so3_exp, so3_log

__all__ = [
    "Intrinsics",
    "Image",
    "ImagePyramid",
    "Pose",
    "bilinear_sample",
    "build_pyramid",
    "downsample2",
    "hat",
    "image_gradient",
    "interpolate",
    "pixel_rays",
    "project",
    "se3_exp",
    "se3_log",
    "so3_exp",
    "so3_log",
    "unproject",
]

"""Covariance-based splat initialization from image gradients and
multi-keyframe pixel associations."""

from .build import (
    InitReport,
    covariance_to_splat,
    fallback_splat,
    initialize_splats_for_keyframe,
)
from .covariance import (
    Sigma2D,
    Sigma3D,
    correct_covariance,
    estimate_sigma2d,
    lift_sigma3d,
    projection_jacobian,
    single_view_sigma3d,
)

__all__ = [
    "InitReport",
    "Sigma2D",
    "Sigma3D",
    "correct_covariance",
    "covariance_to_splat",
    "estimate_sigma2d",
    "fallback_splat",
    "initialize_splats_for_keyframe",
    "lift_sigma3d",
    "projection_jacobian",
    "single_view_sigma3d",
]

"""2D Gaussian splat scene, differentiable CPU rasterizer, scene loss, and
the Adam-based scene optimizer with densification."""

from .loss import ELossResult, e_step_loss, normals_from_depth, ssim, ssim_single
from .model import GaussianScene, Splat, validate_splat
from .optimize import (
    EStepFrame,
    EStepReport,
    adam_step,
    densify_and_prune,
    optimize_e_step,
    scene_extent,
)
from .rasterize import (
    RenderOutput,
    SplatGrads,
    apply_rotation_tangent,
    backward,
    rasterize,
)
from .sceneio import read_scene, write_scene

__all__ = [
    "ELossResult",
    "EStepFrame",
    "EStepReport",
    "GaussianScene",
    "RenderOutput",
    "Splat",
    "SplatGrads",
    "adam_step",
    "apply_rotation_tangent",
    "backward",
    "densify_and_prune",
    "e_step_loss",
    "normals_from_depth",
    "optimize_e_step",
    "rasterize",
    "read_scene",
    "scene_extent",
    "ssim",
    "ssim_single",
    "validate_splat",
    "write_scene",
]

"""Pinhole camera intrinsics and (un)projection.

Image frame: origin at the top-left pixel center, u right, v down, units px.
Camera frame: x right, y down, z forward (into the scene).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BehindCamera, InvalidDepth


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def at_level(self, level: int) -> "Intrinsics":
        """Intrinsics of pyramid level `level` (2x2 average pooling per step).

        Pooling maps fine pixel centers {2i, 2i+1} to coarse center i, so
        coordinates transform as x_L = (x + 0.5) / 2^L - 0.5.
        """
        s = 1 << level
        return Intrinsics(
            fx=self.fx / s,
            fy=self.fy / s,
            cx=(self.cx + 0.5) / s - 0.5,
            cy=(self.cy + 0.5) / s - 0.5,
            width=self.width >> level,
            height=self.height >> level,
        )


def project(K: Intrinsics, X) -> np.ndarray:
    """Project camera-frame point(s) (..., 3) to pixel coords (..., 2).

    Raises BehindCamera for any non-positive depth. The result may lie
    outside the image bounds; visibility is the caller's concern.
    """
    X = np.asarray(X, dtype=np.float64)
    z = X[..., 2]
    if np.any(z <= 0):
        raise BehindCamera("non-positive depth in projection")
    u = K.fx * X[..., 0] / z + K.cx
    v = K.fy * X[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def unproject(K: Intrinsics, p, inv_depth) -> np.ndarray:
    """Back-project pixel(s) (..., 2) at inverse depth (1/m) to camera frame."""
    p = np.asarray(p, dtype=np.float64)
    inv_depth = np.asarray(inv_depth, dtype=np.float64)
    if np.any(inv_depth <= 0):
        raise InvalidDepth("inverse depth must be positive")
    x = (p[..., 0] - K.cx) / K.fx
    y = (p[..., 1] - K.cy) / K.fy
    ones = np.ones_like(x)
    return np.stack([x, y, ones], axis=-1) / inv_depth[..., None]


def pixel_rays(K: Intrinsics) -> np.ndarray:
    """Unit-z ray directions for every pixel center, shape (H, W, 3)."""
    u = np.arange(K.width, dtype=np.float64)
    v = np.arange(K.height, dtype=np.float64)
    x = (u - K.cx) / K.fx
    y = (v - K.cy) / K.fy
    X, Y = np.meshgrid(x, y)
    return np.stack([X, Y, np.ones_like(X)], axis=-1)

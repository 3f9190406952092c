"""Image container, bilinear sampling, gradients, and pyramids.

Pixel values are floats in [0, 1] regardless of the source bit depth; images
are either single-channel intensity (H, W) or RGB (H, W, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, OutOfBounds, PyramidTooDeep
from . import _kernels


@dataclass(frozen=True)
class Image:
    """Row-major float image; `data` has shape (H, W) or (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] != 3):
            raise ValueError(f"bad image shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if not np.all(np.isfinite(d)):
            raise ValueError("image has non-finite pixels")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def to_intensity(self) -> "Image":
        if self.channels == 1:
            return self
        return Image(self.data.mean(axis=2))


def bilinear_sample(img: Image | np.ndarray, uv) -> np.ndarray:
    """Bilinear interpolation at continuous pixel coords (u, v).

    uv may be a single (2,) coordinate or an (N, 2) batch. Exact at integer
    coordinates. Raises OutOfBounds if any sample leaves
    [0, W-1] x [0, H-1]; callers treat that as an invisible observation.
    """
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    uv = np.asarray(uv, dtype=np.float64)
    single = uv.ndim == 1
    uv = np.atleast_2d(uv)
    h, w = data.shape[:2]
    u, v = uv[:, 0], uv[:, 1]
    if np.any(u < 0) or np.any(u > w - 1) or np.any(v < 0) or np.any(v > h - 1):
        raise OutOfBounds("bilinear sample outside image")
    if data.ndim == 2:
        out = _kernels.bilinear_many(data, u, v)
    else:
        out = np.stack(
            [_kernels.bilinear_many(data[:, :, c], u, v) for c in range(3)], axis=-1
        )
    return out[0] if single else out


def image_gradient(img: Image | np.ndarray) -> np.ndarray:
    """Per-pixel spatial gradient (dI/dx, dI/dy), shape img.shape + (2,).

    Central differences in the interior, one-sided at the borders so that
    patches near the image edge stay usable.
    """
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    if data.shape[0] < 3 or data.shape[1] < 3:
        raise DimensionMismatch("gradient needs at least 3x3 pixels")
    gy, gx = np.gradient(data, axis=(0, 1))
    return np.stack([gx, gy], axis=-1)


def downsample2(data: np.ndarray) -> np.ndarray:
    """2x2 average pooling with floor division (odd edges dropped)."""
    h, w = data.shape[:2]
    h2, w2 = h // 2, w // 2
    d = data[: 2 * h2, : 2 * w2]
    if data.ndim == 2:
        return 0.25 * (d[0::2, 0::2] + d[1::2, 0::2] + d[0::2, 1::2] + d[1::2, 1::2])
    return 0.25 * (d[0::2, 0::2] + d[1::2, 0::2] + d[0::2, 1::2] + d[1::2, 1::2])


@dataclass(frozen=True)
class ImagePyramid:
    """Level 0 is full resolution; each level halves both dimensions."""

    levels: tuple

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def level(self, i: int) -> np.ndarray:
        return self.levels[i]


def build_pyramid(img: Image | np.ndarray, num_levels: int) -> ImagePyramid:
    """Average-pooling pyramid; raises PyramidTooDeep below 8x8 at the top."""
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    if num_levels < 1:
        raise ValueError("need at least one level")
    top_h = data.shape[0] >> (num_levels - 1)
    top_w = data.shape[1] >> (num_levels - 1)
    if top_h < 8 or top_w < 8:
        raise PyramidTooDeep(
            f"top level would be {top_h}x{top_w} (< 8x8) for {num_levels} levels"
        )
    levels = [data]
    for _ in range(num_levels - 1):
        levels.append(downsample2(levels[-1]))
    return ImagePyramid(tuple(levels))

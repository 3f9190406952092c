"""Scene-optimization loss: RGB L1 + D-SSIM + sparse depth L1 + normal
consistency, with analytic gradients for the rasterizer backward pass.

The SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with stabilizers
C1 = 0.01^2 and C2 = 0.03^2 on the [0, 1] range, evaluated on fully valid
windows only (a 5-pixel border is excluded). D-SSIM = (1 - SSIM) / 2.

The normal-consistency term compares the rendered normal map against normals
computed by central finite differences of the rendered depth (both in the
camera frame, oriented toward the camera), averaged over pixels where the
accumulated alpha exceeds 0.5. Gradients flow into both the normal buffer and
the rendered depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import Image, Intrinsics
from ..errors import DimensionMismatch
from .rasterize import RenderOutput

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
ALPHA_VALID = 0.5


def _gaussian_kernel1d(sigma: float = SSIM_SIGMA, radius: int = SSIM_RADIUS) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


_KERNEL = _gaussian_kernel1d()


def _conv_valid(img: np.ndarray, k: np.ndarray = _KERNEL) -> np.ndarray:
    """Separable 'valid' correlation; output shrinks by 2*radius per axis."""
    tmp = sliding_window_view(img, k.size, axis=0) @ k
    return sliding_window_view(tmp, k.size, axis=1) @ k


def _conv_full(img: np.ndarray, k: np.ndarray = _KERNEL) -> np.ndarray:
    """Adjoint of _conv_valid (kernel is symmetric): zero-padded correlation."""
    r = k.size - 1
    padded = np.pad(img, ((r, r), (r, r)))
    return _conv_valid(padded, k)


def ssim_single(x: np.ndarray, y: np.ndarray, with_grad: bool = False):
    """SSIM of two single-channel images; optionally d(mean SSIM)/dx."""
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    if min(x.shape) < 2 * SSIM_RADIUS + 1:
        raise DimensionMismatch("SSIM needs at least 11x11 images")
    mx = _conv_valid(x)
    my = _conv_valid(y)
    sxx = _conv_valid(x * x) - mx * mx
    syy = _conv_valid(y * y) - my * my
    sxy = _conv_valid(x * y) - mx * my
    a1 = 2.0 * mx * my + SSIM_C1
    a2 = 2.0 * sxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    s_map = (a1 * a2) / (b1 * b2)
    score = float(s_map.mean())
    if not with_grad:
        return score, None

    n_win = s_map.size
    ds_dmx = 2.0 * my * a2 / (b1 * b2) - 2.0 * mx * a1 * a2 / (b1 * b1 * b2)
    ds_dsxx = -a1 * a2 / (b1 * b2 * b2)
    ds_dsxy = 2.0 * a1 / (b1 * b2)
    # per-window coefficients of the contribution w_{q-p} * (F1 + F2 x_q + F3 y_q)
    f1 = ds_dmx - ds_dsxx * 2.0 * mx - ds_dsxy * my
    f2 = ds_dsxx * 2.0
    f3 = ds_dsxy
    grad = (_conv_full(f1) + x * _conv_full(f2) + y * _conv_full(f3)) / n_win
    return score, grad


def ssim(a: np.ndarray | Image, b: np.ndarray | Image) -> float:
    """Mean SSIM over channels and pixels (valid windows)."""
    x = a.data if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    y = b.data if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    if x.ndim == 2:
        return ssim_single(x, y)[0]
    return float(np.mean([ssim_single(x[:, :, c], y[:, :, c])[0] for c in range(x.shape[2])]))


def normals_from_depth(depth: np.ndarray, K: Intrinsics, valid: np.ndarray):
    """Camera-frame unit normals from central differences of a depth map.

    Points P(u, v) = depth * ((u-cx)/fx, (v-cy)/fy, 1); the unnormalized
    normal is the cross product of the central-difference tangents, flipped
    to face the camera (n_z <= 0). Returns (normals, mask, cache) where mask
    marks pixels whose full difference stencil is valid.
    """
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    rx = (u - K.cx) / K.fx
    ry = (v - K.cy) / K.fy
    rays = np.empty((h, w, 3))
    rays[:, :, 0] = rx[None, :]
    rays[:, :, 1] = ry[:, None]
    rays[:, :, 2] = 1.0
    P = depth[:, :, None] * rays

    tu = np.zeros_like(P)
    tv = np.zeros_like(P)
    tu[:, 1:-1] = 0.5 * (P[:, 2:] - P[:, :-2])
    tv[1:-1, :] = 0.5 * (P[2:, :] - P[:-2, :])
    n_raw = np.cross(tu, tv)

    mask = valid.copy()
    mask[:, :2] = False
    mask[:, -2:] = False
    mask[:2, :] = False
    mask[-2:, :] = False
    inner = mask.copy()
    inner[1:-1, 1:-1] &= (
        valid[1:-1, 2:] & valid[1:-1, :-2] & valid[2:, 1:-1] & valid[:-2, 1:-1]
    )
    mask = inner

    nlen = np.linalg.norm(n_raw, axis=-1)
    mask &= nlen > 1e-12
    sgn = np.where(n_raw[:, :, 2] > 0, -1.0, 1.0)
    normals = np.zeros_like(n_raw)
    safe = np.maximum(nlen, 1e-12)
    normals = sgn[:, :, None] * n_raw / safe[:, :, None]
    normals[~mask] = 0.0
    cache = (rays, tu, tv, n_raw, nlen, sgn)
    return normals, mask, cache


def normals_from_depth_backward(g_nd, mask, cache):
    """Chain d(loss)/d(unit depth-normal) back to d(loss)/d(depth)."""
    rays, tu, tv, n_raw, nlen, sgn = cache
    safe = np.maximum(nlen, 1e-12)[:, :, None]
    nhat = n_raw / safe
    g_nd = np.where(mask[:, :, None], g_nd, 0.0)
    # through the flip and normalization
    g_raw = sgn[:, :, None] * (g_nd - np.sum(g_nd * nhat, axis=-1, keepdims=True) * nhat) / safe
    # n_raw = tu x tv
    g_tu = np.cross(tv, g_raw)
    g_tv = np.cross(g_raw, tu)
    # tu(u,v) = (P(u+1,v) - P(u-1,v)) / 2, tv analogous
    g_P = np.zeros_like(g_raw)
    g_P[:, 2:] += 0.5 * g_tu[:, 1:-1]
    g_P[:, :-2] += -0.5 * g_tu[:, 1:-1]
    g_P[2:, :] += 0.5 * g_tv[1:-1, :]
    g_P[:-2, :] += -0.5 * g_tv[1:-1, :]
    return np.sum(g_P * rays, axis=-1)


@dataclass
class ELossResult:
    total: float
    rgb_l1: float
    dssim: float
    depth_l1: float
    normal: float
    n_depth_pixels: int
    d_color: np.ndarray | None = None
    d_depth: np.ndarray | None = None
    d_normal: np.ndarray | None = None

    def breakdown(self) -> dict:
        return {
            "total": self.total,
            "rgb_l1": self.rgb_l1,
            "dssim": self.dssim,
            "depth_l1": self.depth_l1,
            "normal": self.normal,
        }


def e_step_loss(
    render: RenderOutput,
    gt_image: Image | np.ndarray,
    depth_pixels: np.ndarray | None = None,
    depth_values: np.ndarray | None = None,
    lam: float = 0.2,
    lam_d: float = 500.0,
    lam_n: float = 0.1,
    with_grad: bool = False,
) -> ELossResult:
    """Weighted scene loss against one keyframe.

    depth_pixels (M, 2) integer (u, v) coordinates with depth_values (M,) are
    the tracker's semi-dense depths; pixels whose rendered alpha is below 0.5
    are excluded from the depth term. When with_grad is set, the per-pixel
    gradients for rasterize-backward are attached to the result.
    """
    gt = gt_image.data if isinstance(gt_image, Image) else np.asarray(gt_image, dtype=np.float64)
    pred = render.color
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"render {pred.shape} vs gt {gt.shape}")
    h, w = pred.shape[:2]

    diff = pred - gt
    rgb_l1 = float(np.abs(diff).mean())

    ssim_vals = []
    ssim_grads = []
    for c in range(3):
        s, g = ssim_single(pred[:, :, c], gt[:, :, c], with_grad=with_grad)
        ssim_vals.append(s)
        if with_grad:
            ssim_grads.append(g)
    ssim_mean = float(np.mean(ssim_vals))
    dssim = (1.0 - ssim_mean) / 2.0

    d_color = None
    if with_grad:
        d_color = (1.0 - lam) * np.sign(diff) / diff.size
        sg = np.stack(ssim_grads, axis=-1) / 3.0
        d_color = d_color + lam * (-0.5) * sg

    depth_l1 = 0.0
    n_used = 0
    d_depth = np.zeros((h, w)) if with_grad else None
    if depth_pixels is not None and len(depth_pixels) > 0:
        px = np.asarray(depth_pixels, dtype=np.int64)
        dv = np.asarray(depth_values, dtype=np.float64)
        a_ok = render.alpha[px[:, 1], px[:, 0]] > ALPHA_VALID
        if np.any(a_ok):
            du = px[a_ok, 0]
            dvv = px[a_ok, 1]
            resid = render.depth[dvv, du] - dv[a_ok]
            n_used = int(a_ok.sum())
            depth_l1 = float(np.abs(resid).mean())
            if with_grad:
                np.add.at(d_depth, (dvv, du), lam_d * np.sign(resid) / n_used)

    valid = render.alpha > ALPHA_VALID
    nd, nmask, ncache = normals_from_depth(render.depth, render.cache.K, valid)
    normal_term = 0.0
    d_normal = np.zeros((h, w, 3)) if with_grad else None
    m = int(nmask.sum())
    if m > 0:
        dots = np.sum(render.normal * nd, axis=-1)
        normal_term = float(np.mean(1.0 - dots[nmask]))
        if with_grad:
            gper = -lam_n / m
            d_normal_field = np.where(nmask[:, :, None], gper * nd, 0.0)
            d_normal += d_normal_field
            g_nd = np.where(nmask[:, :, None], gper * render.normal, 0.0)
            d_depth_n = normals_from_depth_backward(g_nd, nmask, ncache)
            d_depth = d_depth + d_depth_n if d_depth is not None else d_depth_n

    total = (1.0 - lam) * rgb_l1 + lam * dssim + lam_d * depth_l1 + lam_n * normal_term
    return ELossResult(
        total=total,
        rgb_l1=rgb_l1,
        dssim=dssim,
        depth_l1=depth_l1,
        normal=normal_term,
        n_depth_pixels=n_used,
        d_color=d_color,
        d_depth=d_depth,
        d_normal=d_normal,
    )

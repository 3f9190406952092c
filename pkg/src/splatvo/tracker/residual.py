"""Photometric residuals over the 8-point pattern with analytic Jacobians.

Residual per pattern pixel, host i -> target j:

    r = (I_j[p'] - b_j) - s (I_i[p] - b_i),  s = (t_j e^{a_j}) / (t_i e^{a_i})

with p' the reprojection of p through the point's inverse depth. A Huber
weight (delta = 9/255) enters the energy; observations that leave the target
image or fall behind the camera are flagged invalid rather than raised.

Pose Jacobians are for left-multiplicative increments exp(xi) * T on the
world-from-camera poses, tangent ordered (v, omega).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Intrinsics, Pose
from . import _kernels
from .types import Keyframe

# DSO's spread 8-point residual pattern, offsets (dx, dy)
PATTERN = np.array(
    [[0, -2], [-1, -1], [1, -1], [-2, 0], [0, 0], [2, 0], [-1, 1], [0, 2]],
    dtype=np.float64,
)
NPAT = 8
HUBER_DELTA = 9.0 / 255.0
# per-point pattern energy above this marks the observation an outlier
OUTLIER_ENERGY = 12.0**2 * 8 / 255.0**2
MIN_VALID_PATTERN = 6
SAMPLE_BORDER = 1.0


def huber_energy(r: np.ndarray, delta: float = HUBER_DELTA) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, r * r, delta * (2 * a - delta))


def huber_weight(r: np.ndarray, delta: float = HUBER_DELTA) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-12))


def level_coords(px: np.ndarray, level: int) -> np.ndarray:
    """Level-0 pixel coords -> level-L coords (2x2 pooling alignment)."""
    return (np.asarray(px, dtype=np.float64) + 0.5) / (1 << level) - 0.5


@dataclass
class HostPoints:
    """Per-level precomputed host-side pattern data for a set of points."""

    rays: np.ndarray  # (N * 8, 3) host camera rays at pattern pixels
    host_int: np.ndarray  # (N * 8,) host intensities
    n_points: int
    level: int
    K: Intrinsics  # level intrinsics


def prepare_host_points(kf: Keyframe, K: Intrinsics, level: int, idx: np.ndarray) -> HostPoints:
    """Sample host pattern intensities and build unprojection rays."""
    KL = K.at_level(level)
    img = kf.pyramid.level(level)
    centers = level_coords(kf.px[idx], level)  # (N, 2)
    pts = centers[:, None, :] + PATTERN[None, :, :]  # (N, 8, 2)
    flat = pts.reshape(-1, 2)
    # clamp pattern samples into the level image (selection keeps a border
    # at level 0; coarse levels may still touch the edge)
    u = np.clip(flat[:, 0], 0.0, KL.width - 1.0)
    v = np.clip(flat[:, 1], 0.0, KL.height - 1.0)
    from ..core import bilinear_sample

    host_int = bilinear_sample(img, np.stack([u, v], axis=-1))
    rays = np.stack(
        [(u - KL.cx) / KL.fx, (v - KL.cy) / KL.fy, np.ones_like(u)], axis=-1
    )
    return HostPoints(rays=rays, host_int=host_int, n_points=len(idx), level=level, K=KL)


@dataclass
class WarpResult:
    valid: np.ndarray  # (N * 8,)
    r: np.ndarray  # residuals
    gu: np.ndarray  # target image derivative d I / d u at p'
    gv: np.ndarray
    Xt: np.ndarray  # (N * 8, 3) target-frame points
    scale: float  # brightness scale s
    point_valid: np.ndarray  # (N,) >= MIN_VALID_PATTERN pattern pixels valid
    energy: np.ndarray  # (N,) pattern Huber energy (normalized to 8 pixels)


def warp_residuals(
    host: HostPoints,
    target_img: np.ndarray,
    rel_pose: Pose,
    idepth: np.ndarray,
    scale: float,
    b_host: float,
    b_target: float,
) -> WarpResult:
    """Warp all pattern pixels into the target level image and evaluate r.

    rel_pose maps host-camera to target-camera coordinates; idepth is one
    inverse depth per point, shared by its pattern pixels.
    """
    n = host.n_points
    flat_idepth = np.repeat(np.asarray(idepth, dtype=np.float64), NPAT)
    m = n * NPAT
    valid = np.zeros(m, dtype=np.bool_)
    out_i = np.zeros(m)
    gu = np.zeros(m)
    gv = np.zeros(m)
    Xt = np.zeros((m, 3))
    KL = host.K
    _kernels.warp_sample(
        target_img,
        host.rays,
        flat_idepth,
        rel_pose.rotation,
        rel_pose.translation,
        KL.fx,
        KL.fy,
        KL.cx,
        KL.cy,
        SAMPLE_BORDER,
        valid,
        out_i,
        gu,
        gv,
        Xt,
    )
    r = np.where(valid, (out_i - b_target) - scale * (host.host_int - b_host), 0.0)
    vcount = valid.reshape(n, NPAT).sum(axis=1)
    point_valid = vcount >= MIN_VALID_PATTERN
    e = huber_energy(r).reshape(n, NPAT).sum(axis=1)
    energy = np.where(vcount > 0, e * (NPAT / np.maximum(vcount, 1)), np.inf)
    return WarpResult(
        valid=valid, r=r, gu=gu, gv=gv, Xt=Xt, scale=scale,
        point_valid=point_valid, energy=energy,
    )


def projection_rows(K: Intrinsics, Xt: np.ndarray, gu: np.ndarray, gv: np.ndarray):
    """Image-gradient row dI/dX_t = [gu gv] * dproj/dX_t, shape (M, 3)."""
    z = np.maximum(Xt[:, 2], 1e-9)
    gx = gu * K.fx / z
    gy = gv * K.fy / z
    gz = -(gu * K.fx * Xt[:, 0] + gv * K.fy * Xt[:, 1]) / z**2
    return np.stack([gx, gy, gz], axis=-1)


def pose_jacobian_target(gX: np.ndarray, X_world: np.ndarray, R_target: np.ndarray):
    """d r / d xi_target for increments exp(xi) * T_target, (M, 6).

    gX is dr/dX_t in target-camera coordinates; with g_w = R_t gX (world),
    X_t = R_t^T ((I - [omega]x) X_w - v - t_t) gives dr/dv = -g_w and
    dr/domega = g_w x X_w.
    """
    g_w = gX @ R_target.T
    J = np.empty((gX.shape[0], 6))
    J[:, :3] = -g_w
    J[:, 3:] = np.cross(g_w, X_world)
    return J


def pose_jacobian_host(gX: np.ndarray, X_world: np.ndarray, R_target: np.ndarray):
    """d r / d xi_host for increments exp(xi) * T_host, (M, 6) (signs mirror
    the target-pose case)."""
    g_w = gX @ R_target.T
    J = np.empty((gX.shape[0], 6))
    J[:, :3] = g_w
    J[:, 3:] = np.cross(X_world, g_w)
    return J


def idepth_jacobian(gX: np.ndarray, rays: np.ndarray, idepth_flat: np.ndarray, R_rel: np.ndarray):
    """d r / d idepth: X_h = ray / rho, dX_t/drho = -R_rel ray / rho^2."""
    dX = -(rays / np.maximum(idepth_flat, 1e-12)[:, None] ** 2) @ R_rel.T
    return np.sum(gX * dX, axis=-1)


def photometric_residual(host_kf: Keyframe, target_kf: Keyframe, K: Intrinsics, point_index: int):
    """Spec surface: residual 8-vector and validity for one active point."""
    idx = np.array([point_index])
    host = prepare_host_points(host_kf, K, 0, idx)
    rel = target_kf.pose.inverse() @ host_kf.pose
    s = target_kf.brightness_scale_from(host_kf)
    wr = warp_residuals(
        host,
        target_kf.pyramid.level(0),
        rel,
        host_kf.idepth[idx],
        s,
        host_kf.b,
        target_kf.b,
    )
    return wr.r[:NPAT], bool(wr.point_valid[0]), wr.valid[:NPAT]

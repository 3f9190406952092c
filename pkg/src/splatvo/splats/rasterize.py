"""Differentiable CPU rasterizer for 2D Gaussian splats.

Forward: per pixel ray, intersect each splat's plane, evaluate the splat
Gaussian at the intersection, and composite color / z-depth / normal /
opacity front-to-back. Compositing order is the per-splat ray intersection
depth at each tile's center ray (no per-pixel re-sort). Splats whose
projected footprint misses a tile are skipped; the footprint bound is the
Mahalanobis radius sqrt(2 ln 255) = 3.33 sigma at which the contribution
falls below the 1/255 alpha cutoff, padded by one pixel.

Backward: analytic gradients with respect to every splat parameter, obtained
by re-walking the sorted lists and recovering suffix sums from the forward
totals (see _kernels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Intrinsics, Pose
from . import _kernels
from .model import GaussianScene

TILE_SIZE = 16
DEPTH_NORM_EPS = 1e-8
_N_BOUNDARY = 32
_RHO_MAX = math.sqrt(_kernels.RHO2_MAX)


@dataclass
class RasterCache:
    """Everything the backward pass needs to re-walk the compositing."""

    mu_cam: np.ndarray
    tu_cam: np.ndarray
    tv_cam: np.ndarray
    n_cam: np.ndarray
    ndotmu: np.ndarray
    isu2: np.ndarray
    isv2: np.ndarray
    su: np.ndarray
    sv: np.ndarray
    op: np.ndarray
    col: np.ndarray
    tile_starts: np.ndarray
    tile_splats: np.ndarray
    ntx: int
    dsum: np.ndarray
    nsum: np.ndarray
    pose: Pose
    K: Intrinsics
    n_splats: int


@dataclass
class RenderOutput:
    """Rasterization result; normals are unit vectors in the camera frame."""

    color: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    alpha: np.ndarray
    trans: np.ndarray
    n_contrib: np.ndarray
    cache: RasterCache


@dataclass
class SplatGrads:
    """Per-splat loss gradients (means and rotation tangent in world frame)."""

    mean: np.ndarray
    rot: np.ndarray  # (N, 2) tangent: rotations about (t_u, t_v)
    scale_u: np.ndarray
    scale_v: np.ndarray
    opacity: np.ndarray
    color: np.ndarray

    def visible(self) -> np.ndarray:
        """Splats that received any gradient at all."""
        return (
            (np.abs(self.mean).sum(axis=1) > 0)
            | (np.abs(self.rot).sum(axis=1) > 0)
            | (np.abs(self.color).sum(axis=1) > 0)
            | (np.abs(self.opacity) > 0)
            | (np.abs(self.scale_u) > 0)
            | (np.abs(self.scale_v) > 0)
        )


def _footprint_bboxes(mu_cam, tu_cam, tv_cam, su, sv, K: Intrinsics):
    """Pixel bounding boxes of the 3.33-sigma splat boundary; culls splats
    that reach behind the near plane."""
    n = mu_cam.shape[0]
    theta = np.linspace(0.0, 2.0 * np.pi, _N_BOUNDARY, endpoint=False)
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=-1)  # (B, 2)
    pts = (
        mu_cam[:, None, :]
        + _RHO_MAX * ring[None, :, 0, None] * (su[:, None, None] * tu_cam[:, None, :])
        + _RHO_MAX * ring[None, :, 1, None] * (sv[:, None, None] * tv_cam[:, None, :])
    )  # (N, B, 3)
    valid = np.all(pts[:, :, 2] > _kernels.Z_NEAR, axis=1) & (mu_cam[:, 2] > _kernels.Z_NEAR)
    z = np.maximum(pts[:, :, 2], _kernels.Z_NEAR)
    u = K.fx * pts[:, :, 0] / z + K.cx
    v = K.fy * pts[:, :, 1] / z + K.cy
    x0 = np.floor(u.min(axis=1)) - 1
    x1 = np.ceil(u.max(axis=1)) + 1
    y0 = np.floor(v.min(axis=1)) - 1
    y1 = np.ceil(v.max(axis=1)) + 1
    valid &= (x1 >= 0) & (x0 <= K.width - 1) & (y1 >= 0) & (y0 <= K.height - 1)
    x0 = np.clip(x0, 0, K.width - 1)
    x1 = np.clip(x1, 0, K.width - 1)
    y0 = np.clip(y0, 0, K.height - 1)
    y1 = np.clip(y1, 0, K.height - 1)
    return np.stack([x0, y0, x1, y1], axis=-1).astype(np.int64), valid


def _bin_tiles(bboxes, valid, mu_cam, n_cam, K: Intrinsics, tile: int):
    """Per-tile splat lists sorted by tile-center ray intersection depth."""
    ntx = (K.width + tile - 1) // tile
    nty = (K.height + tile - 1) // tile
    n_tiles = ntx * nty

    idx = np.nonzero(valid)[0]
    if idx.size == 0:
        return (
            np.zeros(n_tiles + 1, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            ntx,
        )
    tx0 = bboxes[idx, 0] // tile
    ty0 = bboxes[idx, 1] // tile
    tx1 = bboxes[idx, 2] // tile
    ty1 = bboxes[idx, 3] // tile
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    rep = np.repeat(np.arange(idx.size), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total) - offsets[rep]  # 0 .. nx*ny-1 per splat
    lx = local % nx[rep]
    ly = local // nx[rep]
    pair_tiles = (ty0[rep] + ly) * ntx + (tx0[rep] + lx)
    pair_splats = idx[rep]

    # depth key: ray-plane intersection along the tile center ray, falling
    # back to the splat center depth where the plane is edge-on
    tx = pair_tiles % ntx
    ty = pair_tiles // ntx
    cxr = (tx * tile + (tile - 1) / 2.0 - K.cx) / K.fx
    cyr = (ty * tile + (tile - 1) / 2.0 - K.cy) / K.fy
    nk = n_cam[pair_splats]
    muk = mu_cam[pair_splats]
    ndotd = nk[:, 0] * cxr + nk[:, 1] * cyr + nk[:, 2]
    numer = np.sum(nk * muk, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        zc = numer / ndotd
    bad = (np.abs(ndotd) < _kernels.DENOM_EPS) | ~(zc > 0)
    zc = np.where(bad, muk[:, 2], zc)

    order = np.lexsort((pair_splats, zc, pair_tiles))
    pair_tiles = pair_tiles[order]
    pair_splats = pair_splats[order]
    counts = np.bincount(pair_tiles, minlength=n_tiles)
    tile_starts = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(counts, out=tile_starts[1:])
    return tile_starts, pair_splats.astype(np.int64), ntx


def rasterize(scene: GaussianScene, pose: Pose, K: Intrinsics, tile: int = TILE_SIZE) -> RenderOutput:
    """Render the scene from `pose` (world-from-camera)."""
    R, t = pose.rotation, pose.translation
    mu_cam = (scene.means - t) @ R
    tu_cam = scene.tan_u @ R
    tv_cam = scene.tan_v @ R
    n_cam = np.cross(tu_cam, tv_cam)
    su = scene.scales[:, 0].copy()
    sv = scene.scales[:, 1].copy()
    op = scene.opacity.copy()
    col = scene.colors.copy()

    if len(scene) > 0:
        bboxes, valid = _footprint_bboxes(mu_cam, tu_cam, tv_cam, su, sv, K)
    else:
        bboxes = np.zeros((0, 4), dtype=np.int64)
        valid = np.zeros(0, dtype=bool)
    tile_starts, tile_splats, ntx = _bin_tiles(bboxes, valid, mu_cam, n_cam, K, tile)

    ndotmu = np.sum(n_cam * mu_cam, axis=1)
    isu2 = 1.0 / np.maximum(su, 1e-12) ** 2
    isv2 = 1.0 / np.maximum(sv, 1e-12) ** 2

    H, W = K.height, K.width
    color = np.zeros((H, W, 3))
    dsum = np.zeros((H, W))
    alpha = np.zeros((H, W))
    nsum = np.zeros((H, W, 3))
    trans = np.ones((H, W))
    count = np.zeros((H, W), dtype=np.int32)

    _kernels.forward(
        mu_cam, tu_cam, tv_cam, n_cam, ndotmu, isu2, isv2, su, sv, op, col,
        tile_starts, tile_splats, ntx, tile, H, W,
        K.fx, K.fy, K.cx, K.cy,
        color, dsum, alpha, nsum, trans, count,
    )

    depth = dsum / np.maximum(alpha, DEPTH_NORM_EPS)
    nlen = np.linalg.norm(nsum, axis=-1, keepdims=True)
    normal = np.where(nlen > 1e-12, nsum / np.maximum(nlen, 1e-12), 0.0)

    cache = RasterCache(
        mu_cam=mu_cam, tu_cam=tu_cam, tv_cam=tv_cam, n_cam=n_cam,
        ndotmu=ndotmu, isu2=isu2, isv2=isv2,
        su=su, sv=sv, op=op, col=col,
        tile_starts=tile_starts, tile_splats=tile_splats, ntx=ntx,
        dsum=dsum, nsum=nsum, pose=pose, K=K, n_splats=len(scene),
    )
    return RenderOutput(
        color=color, depth=depth, normal=normal, alpha=alpha,
        trans=trans, n_contrib=count, cache=cache,
    )


def backward(
    render: RenderOutput,
    d_color: np.ndarray | None = None,
    d_depth: np.ndarray | None = None,
    d_normal: np.ndarray | None = None,
    d_alpha: np.ndarray | None = None,
    tile: int = TILE_SIZE,
) -> SplatGrads:
    """Chain per-pixel loss gradients back to per-splat parameter gradients.

    d_depth is with respect to the normalized depth D = dsum / max(A, eps);
    d_normal with respect to the unit-normalized normal buffer.
    """
    c = render.cache
    K, H, W = c.K, c.K.height, c.K.width
    n = c.n_splats

    gC = np.zeros((H, W, 3)) if d_color is None else np.asarray(d_color, dtype=np.float64)
    gA = np.zeros((H, W)) if d_alpha is None else np.asarray(d_alpha, dtype=np.float64).copy()

    A = render.alpha
    denom = np.maximum(A, DEPTH_NORM_EPS)
    if d_depth is not None:
        gD = np.asarray(d_depth, dtype=np.float64)
        gDsum = gD / denom
        gA = gA + np.where(A > DEPTH_NORM_EPS, -gD * c.dsum / denom**2, 0.0)
    else:
        gDsum = np.zeros((H, W))

    if d_normal is not None:
        gN = np.asarray(d_normal, dtype=np.float64)
        nlen = np.linalg.norm(c.nsum, axis=-1, keepdims=True)
        nhat = np.where(nlen > 1e-12, c.nsum / np.maximum(nlen, 1e-12), 0.0)
        proj = np.sum(gN * nhat, axis=-1, keepdims=True)
        gNsum = np.where(nlen > 1e-12, (gN - proj * nhat) / np.maximum(nlen, 1e-12), 0.0)
    else:
        gNsum = np.zeros((H, W, 3))

    g_mu = np.zeros((n, 3))
    g_tu = np.zeros((n, 3))
    g_tv = np.zeros((n, 3))
    g_n = np.zeros((n, 3))
    g_su = np.zeros(n)
    g_sv = np.zeros(n)
    g_op = np.zeros(n)
    g_col = np.zeros((n, 3))

    _kernels.backward(
        c.mu_cam, c.tu_cam, c.tv_cam, c.n_cam, c.ndotmu, c.isu2, c.isv2,
        c.su, c.sv, c.op, c.col,
        c.tile_starts, c.tile_splats, c.ntx, tile, H, W,
        K.fx, K.fy, K.cx, K.cy,
        render.color, c.dsum, render.alpha, c.nsum,
        gC, gDsum, gA, gNsum,
        g_mu, g_tu, g_tv, g_n, g_su, g_sv, g_op, g_col,
    )

    # camera-frame vector gradients back to world frame: v_cam = R^T v_world
    R = c.pose.rotation
    g_mu_w = g_mu @ R.T
    g_tu_w = g_tu @ R.T
    g_tv_w = g_tv @ R.T
    g_n_w = g_n @ R.T

    # 2-parameter rotation tangent (delta_1 about t_u, delta_2 about t_v):
    #   d t_u / d delta = (0, -n),  d t_v / d delta = (n, 0),
    #   d n   / d delta = (-t_v, t_u)
    tu_w = c.tu_cam @ R.T
    tv_w = c.tv_cam @ R.T
    n_w = c.n_cam @ R.T
    g_rot = np.stack(
        [
            np.sum(g_tv_w * n_w, axis=1) - np.sum(g_n_w * tv_w, axis=1),
            -np.sum(g_tu_w * n_w, axis=1) + np.sum(g_n_w * tu_w, axis=1),
        ],
        axis=-1,
    )

    return SplatGrads(
        mean=g_mu_w, rot=g_rot, scale_u=g_su, scale_v=g_sv, opacity=g_op, color=g_col
    )


def apply_rotation_tangent(tan_u: np.ndarray, tan_v: np.ndarray, delta: np.ndarray):
    """Rotate frames by the 2-parameter tangent used by backward().

    delta (N, 2) are rotation angles about each splat's own (t_u, t_v) axes;
    the rotation vector is omega = delta_1 * t_u + delta_2 * t_v.
    """
    from ..core import so3_exp

    out_u = np.empty_like(tan_u)
    out_v = np.empty_like(tan_v)
    for i in range(tan_u.shape[0]):
        omega = delta[i, 0] * tan_u[i] + delta[i, 1] * tan_v[i]
        Rw = so3_exp(omega)
        out_u[i] = Rw @ tan_u[i]
        out_v[i] = Rw @ tan_v[i]
    return out_u, out_v

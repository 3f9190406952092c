"""Synthetic piecewise-planar scenes with analytic ground truth.

Scenes are textured parallelogram patches; rendering is exact ray-plane
intersection per pixel, which makes depth and multi-view photometric
consistency exact by construction (up to resampling). Textures are
deterministic given the patch seed, so renders are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Image, Intrinsics, Pose, pixel_rays

_Z_NEAR = 1e-4


@dataclass(frozen=True)
class Patch:
    """Parallelogram patch: origin + s*edge_u + t*edge_v, (s, t) in [0,1]^2."""

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    texture: str = "blobs"  # blobs | checker | noise | gradient | flat
    albedo: tuple = (1.0, 1.0, 1.0)
    checker_period: float = 0.125  # in patch (s, t) units
    noise_cells: int = 8
    blob_count: int = 300
    blob_sigma: tuple = (0.004, 0.025)  # in patch (s, t) units
    seed: int = 0

    def __post_init__(self):
        for name in ("origin", "edge_u", "edge_v"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            )
        n = np.cross(self.edge_u, self.edge_v)
        if np.linalg.norm(n) < 1e-12:
            raise ValueError("degenerate patch (area ~ 0)")

    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class SceneSpec:
    patches: tuple
    ambient: float = 1.0
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        if not self.patches:
            raise ValueError("scene needs at least one patch")


def _noise_grid(seed: int, cells: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((cells + 1, cells + 1))


_RASTER_RES = 1024
_blob_cache: dict = {}


def _blob_raster(patch: Patch) -> np.ndarray:
    """Rasterized sum of Gaussian bumps on a mid-gray background (cached).

    Sparse blob structure concentrates image gradients the way real scenes
    do, which both the pixel selector and the covariance-based splat
    initialization rely on; the raster is sampled bilinearly at render time.
    """
    key = (patch.seed, patch.blob_count, patch.blob_sigma)
    hit = _blob_cache.get(key)
    if hit is not None:
        return hit
    rng = np.random.default_rng(patch.seed)
    centers = rng.random((patch.blob_count, 2))
    # log-uniform sizes: small blobs carry fine-level gradient contrast,
    # large ones anchor the coarse pyramid levels
    sigmas = np.exp(
        rng.uniform(
            np.log(patch.blob_sigma[0]), np.log(patch.blob_sigma[1]), patch.blob_count
        )
    )
    amps = rng.uniform(0.3, 0.6, patch.blob_count) * rng.choice(
        [-1.0, 1.0], patch.blob_count
    )
    n = _RASTER_RES
    axis = (np.arange(n) + 0.5) / n
    img = np.full((n, n), 0.5)
    for (cs, ct), sg, am in zip(centers, sigmas, amps):
        # each bump only touches its 4-sigma neighborhood
        r = 4.0 * sg
        i0, i1 = np.searchsorted(axis, (cs - r, cs + r))
        j0, j1 = np.searchsorted(axis, (ct - r, ct + r))
        if i0 >= i1 or j0 >= j1:
            continue
        ds = axis[i0:i1] - cs
        dt = axis[j0:j1] - ct
        d2 = dt[:, None] ** 2 + ds[None, :] ** 2
        img[j0:j1, i0:i1] += am * np.exp(-0.5 * d2 / sg**2)
    img = np.clip(img, 0.08, 0.95)
    _blob_cache[key] = img
    return img


def _texture_value(patch: Patch, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Scalar texture in [0.08, 0.95]; smooth except at checker edges."""
    if patch.texture == "blobs":
        raster = _blob_raster(patch)
        n = _RASTER_RES
        gs = np.clip(s, 0.0, 1.0) * n - 0.5
        gt = np.clip(t, 0.0, 1.0) * n - 0.5
        i = np.clip(gs.astype(np.int64), 0, n - 2)
        j = np.clip(gt.astype(np.int64), 0, n - 2)
        fs = np.clip(gs - i, 0.0, 1.0)
        ft = np.clip(gt - j, 0.0, 1.0)
        v00 = raster[j, i]
        v01 = raster[j, i + 1]
        v10 = raster[j + 1, i]
        v11 = raster[j + 1, i + 1]
        return (1 - ft) * ((1 - fs) * v00 + fs * v01) + ft * ((1 - fs) * v10 + fs * v11)
    if patch.texture == "checker":
        par = (np.floor(s / patch.checker_period) + np.floor(t / patch.checker_period))
        return np.where(par.astype(np.int64) % 2 == 0, 0.25, 0.9)
    if patch.texture == "noise":
        grid = _noise_grid(patch.seed, patch.noise_cells)
        gs = np.clip(s, 0.0, 1.0) * patch.noise_cells
        gt = np.clip(t, 0.0, 1.0) * patch.noise_cells
        i = np.minimum(gs.astype(np.int64), patch.noise_cells - 1)
        j = np.minimum(gt.astype(np.int64), patch.noise_cells - 1)
        fs = gs - i
        ft = gt - j
        # cosine smoothstep keeps the gradient continuous across cells
        fs = 0.5 * (1.0 - np.cos(np.pi * fs))
        ft = 0.5 * (1.0 - np.cos(np.pi * ft))
        v00 = grid[j, i]
        v01 = grid[j, i + 1]
        v10 = grid[j + 1, i]
        v11 = grid[j + 1, i + 1]
        v = (1 - ft) * ((1 - fs) * v00 + fs * v01) + ft * ((1 - fs) * v10 + fs * v11)
        return 0.15 + 0.75 * v
    if patch.texture == "gradient":
        return 0.15 + 0.7 * np.clip(s, 0.0, 1.0)
    if patch.texture == "flat":
        return np.full_like(s, 0.6)
    raise ValueError(f"unknown texture {patch.texture!r}")


def _trace(scene: SceneSpec, origin: np.ndarray, dirs_world: np.ndarray):
    """Nearest-hit color and ray parameter for a flat list of world rays.

    Returns (color (N, 3) with background where no hit, tau (N,) with +inf
    where no hit). For unit-z camera rays tau equals the camera z-depth.
    """
    n_rays = dirs_world.shape[0]
    best_tau = np.full(n_rays, np.inf)
    color = np.tile(np.asarray(scene.background, dtype=np.float64), (n_rays, 1))

    for patch in scene.patches:
        n = patch.normal()
        denom = dirs_world @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = ((patch.origin - origin) @ n) / denom
        q = origin + tau[:, None] * dirs_world - patch.origin
        # local parallelogram coordinates via the dual basis
        G = np.array(
            [
                [patch.edge_u @ patch.edge_u, patch.edge_u @ patch.edge_v],
                [patch.edge_u @ patch.edge_v, patch.edge_v @ patch.edge_v],
            ]
        )
        b = np.stack([q @ patch.edge_u, q @ patch.edge_v], axis=-1)
        st = b @ np.linalg.inv(G).T
        s, t = st[:, 0], st[:, 1]
        hit = (
            (np.abs(denom) > 1e-12)
            & (tau > _Z_NEAR)
            & (tau < best_tau)
            & (s >= 0.0)
            & (s <= 1.0)
            & (t >= 0.0)
            & (t <= 1.0)
        )
        if not np.any(hit):
            continue
        tex = _texture_value(patch, s[hit], t[hit])
        albedo = np.asarray(patch.albedo, dtype=np.float64)
        color[hit] = scene.ambient * tex[:, None] * albedo[None, :]
        best_tau[hit] = tau[hit]

    return color, best_tau


def render_scene(
    scene: SceneSpec,
    pose: Pose,
    K: Intrinsics,
    exposure: float = 1.0,
    reference_exposure: float = 1.0,
    supersample: int = 2,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Render (rgb Image, depth Image) from `pose` (world-from-camera).

    Color is supersampled `supersample`^2 per pixel and box-filtered; depth is
    the exact center-ray z-depth of the nearest hit (0 where no patch is hit).
    Intensity is scaled by exposure / reference_exposure before optional
    additive Gaussian noise and clamping to [0, 1].
    """
    h, w = K.height, K.width
    ss = max(1, int(supersample))
    origin = pose.translation

    center_dirs = pixel_rays(K).reshape(-1, 3) @ pose.rotation.T
    _, tau = _trace(scene, origin, center_dirs)
    depth = np.where(np.isfinite(tau), tau, 0.0).reshape(h, w)

    if ss > 1:
        sub = (np.arange(ss) + 0.5) / ss - 0.5
        uu = (np.arange(w)[:, None] + sub[None, :]).ravel()
        vv = (np.arange(h)[:, None] + sub[None, :]).ravel()
        U, V = np.meshgrid(uu, vv)
        x = (U - K.cx) / K.fx
        y = (V - K.cy) / K.fy
        dirs = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3) @ pose.rotation.T
        color, _ = _trace(scene, origin, dirs)
        color = color.reshape(h * ss, w * ss, 3).reshape(h, ss, w, ss, 3).mean(axis=(1, 3))
    else:
        color, _ = _trace(scene, origin, center_dirs)
        color = color.reshape(h, w, 3)

    color = color * (exposure / reference_exposure)
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        color = color + rng.normal(0.0, noise_sigma, size=color.shape)
    color = np.clip(color, 0.0, 1.0)
    return Image(color), Image(depth)

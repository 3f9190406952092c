"""Keyframe-level splat initialization.

For every uncovered semi-dense point of a new keyframe: estimate the 2D
intensity covariance in the host view and in every co-visible keyframe
(selected by the tracker's photometric threshold), lift them to a world
covariance, correct it, and decompose it into splat parameters. Per-point
failures degrade to an isotropic fallback splat.

The Eq-style scaling factor of the 2D fits is never explicitly resolved:
the fits assume unit-amplitude Gaussian intensity blobs (exact for blob-like
structure), and the final opacity applies the preset rule against the
dominant splat scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Intrinsics, Pose, bilinear_sample, unproject
from ..errors import (
    FitRejected,
    InsufficientSupport,
    InvalidCovariance,
    RankDeficient,
)
from ..splats import GaussianScene, Splat
from ..tracker import OUTLIER_ENERGY, prepare_host_points, warp_residuals
from ..tracker.types import Keyframe, Window
from .covariance import (
    Sigma2D,
    correct_covariance,
    estimate_sigma2d,
    lift_sigma3d,
    single_view_sigma3d,
)

OPACITY_PRESET = 0.05
OPACITY_CLAMP = (0.05, 0.99)
COVER_PX = 1.0
COVER_RELDEPTH = 0.05
FALLBACK_OPACITY = 0.5
DEGENERATE_EIG = 1e-9


@dataclass
class InitReport:
    added: int = 0
    covered: int = 0
    fallback: int = 0
    full_path: int = 0
    fit_residuals: list = field(default_factory=list)

    @property
    def fallback_rate(self) -> float:
        total = self.fallback + self.full_path
        return self.fallback / total if total else 0.0

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.fit_residuals)) if self.fit_residuals else 0.0


def covariance_to_splat(
    S: np.ndarray,
    X: np.ndarray,
    color: np.ndarray,
    preset: float = OPACITY_PRESET,
    camera_center: np.ndarray | None = None,
    use_sqrt_scales: bool = True,
) -> Splat:
    """Decompose a corrected covariance into splat parameters.

    The two dominant eigenvectors become the tangent frame (normal oriented
    toward `camera_center`), the third direction is flattened to zero, and
    scales are the square roots of the eigenvalues (variances to standard
    deviations; `use_sqrt_scales=False` keeps raw eigenvalues). Opacity is
    preset / s_u, clamped to [0.05, 0.99].
    """
    lam, U = np.linalg.eigh(S)  # ascending
    lam = lam[::-1]
    U = U[:, ::-1]
    t_u, t_v = U[:, 0], U[:, 1]

    if (lam[0] - lam[1]) / max(lam[0], 1e-300) < DEGENERATE_EIG:
        # isotropic in the dominant plane: tie-break by aligning t_u with
        # world x projected into the plane (fall back to world y)
        n = np.cross(t_u, t_v)
        n /= np.linalg.norm(n)
        for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
            proj = axis - (axis @ n) * n
            norm = np.linalg.norm(proj)
            if norm > 1e-9:
                t_u = proj / norm
                t_v = np.cross(n, t_u)
                break

    s_u = float(np.sqrt(lam[0])) if use_sqrt_scales else float(lam[0])
    s_v = float(np.sqrt(lam[1])) if use_sqrt_scales else float(lam[1])
    s_v = min(s_v, s_u)

    if camera_center is not None:
        n = np.cross(t_u, t_v)
        if n @ (np.asarray(camera_center) - np.asarray(X)) < 0:
            t_v = -t_v

    opacity = float(np.clip(preset / max(s_u, 1e-12), *OPACITY_CLAMP))
    return Splat(
        mean=np.asarray(X, dtype=np.float64),
        tan_u=t_u,
        tan_v=t_v,
        scale_u=s_u,
        scale_v=max(s_v, 1e-9),
        opacity=opacity,
        color=np.clip(np.asarray(color, dtype=np.float64), 0.0, 1.0),
    )


def fallback_splat(X, depth, color, K: Intrinsics, pose: Pose) -> Splat:
    """Isotropic one-pixel-footprint splat facing the camera."""
    scale = max(depth / K.fx, 1e-9)
    view = pose.translation - np.asarray(X)
    n = view / max(np.linalg.norm(view), 1e-12)
    ref = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0, 1.0, 0])
    t_u = np.cross(ref, n)
    t_u /= np.linalg.norm(t_u)
    t_v = np.cross(n, t_u)
    return Splat(
        mean=np.asarray(X, dtype=np.float64),
        tan_u=t_u,
        tan_v=t_v,
        scale_u=scale,
        scale_v=scale,
        opacity=FALLBACK_OPACITY,
        color=np.clip(np.asarray(color, dtype=np.float64), 0.0, 1.0),
    )


def _coverage_mask(scene: GaussianScene, kf: Keyframe, K: Intrinsics, px, depths):
    """True where an existing splat center projects within one pixel and
    5 percent relative depth of the point."""
    n_pts = len(px)
    if len(scene) == 0 or n_pts == 0:
        return np.zeros(n_pts, dtype=bool)
    mu_cam = (scene.means - kf.pose.translation) @ kf.pose.rotation
    front = mu_cam[:, 2] > 1e-6
    mu_cam = mu_cam[front]
    if mu_cam.shape[0] == 0:
        return np.zeros(n_pts, dtype=bool)
    u = K.fx * mu_cam[:, 0] / mu_cam[:, 2] + K.cx
    v = K.fy * mu_cam[:, 1] / mu_cam[:, 2] + K.cy
    covered = np.zeros(n_pts, dtype=bool)
    for i in range(n_pts):
        close = (np.abs(u - px[i, 0]) <= COVER_PX) & (np.abs(v - px[i, 1]) <= COVER_PX)
        if not np.any(close):
            continue
        zs = mu_cam[close, 2]
        covered[i] = bool(np.any(np.abs(zs - depths[i]) / depths[i] < COVER_RELDEPTH))
    return covered


def _covisible_targets(kf: Keyframe, window: Window, K: Intrinsics, idx, variant: str):
    """Per-point lists of co-visible keyframes and reprojected centers.

    obs: keyframes passing the photometric outlier threshold; pre: only the
    keyframe preceding the host; int: union of both.
    """
    others = [w for w in window if w.kf_id != kf.kf_id]
    prev_kf = None
    prev_candidates = [w for w in others if w.kf_id < kf.kf_id]
    if prev_candidates:
        prev_kf = max(prev_candidates, key=lambda w: w.kf_id)

    per_point = [[] for _ in range(len(idx))]
    if not others or len(idx) == 0:
        return per_point

    host = prepare_host_points(kf, K, 0, idx)
    centers = np.arange(len(idx)) * 8 + 4  # pattern row 4 is the (0,0) offset
    for other in others:
        use_photometric = variant in ("obs", "int") or (
            variant == "pre" and other is prev_kf
        )
        if variant == "pre" and other is not prev_kf:
            continue
        if not use_photometric:
            continue
        rel = other.pose.inverse() @ kf.pose
        s = other.brightness_scale_from(kf)
        wr = warp_residuals(
            host, other.pyramid.level(0), rel, kf.idepth[idx], s, kf.b, other.b
        )
        if variant == "pre" or (variant == "int" and other is prev_kf):
            ok = wr.point_valid
        else:
            ok = wr.point_valid & (wr.energy < OUTLIER_ENERGY)
        z = wr.Xt[centers, 2]
        uv = np.stack(
            [
                K.fx * wr.Xt[centers, 0] / np.maximum(z, 1e-9) + K.cx,
                K.fy * wr.Xt[centers, 1] / np.maximum(z, 1e-9) + K.cy,
            ],
            axis=-1,
        )
        for i in np.nonzero(ok)[0]:
            per_point[i].append((other, uv[i]))
    return per_point


def initialize_splats_for_keyframe(
    kf: Keyframe,
    window: Window,
    scene: GaussianScene,
    K: Intrinsics,
    variant: str = "obs",
    preset: float = OPACITY_PRESET,
    use_sqrt_scales: bool = True,
    patch_radius: int = 4,
    const_scale_px: float = 3.0,
    knn_k: int = 3,
) -> InitReport:
    """Insert splats for the keyframe's uncovered active points.

    variant: obs | pre | int (covariance path with different co-visibility
    selection) or knn | const (ablation baselines: isotropic splats sized by
    the mean distance to the k nearest points, or a fixed pixel footprint).
    """
    report = InitReport()
    idx = np.nonzero(kf.active_mask())[0]
    if idx.size == 0:
        return report
    px = kf.px[idx]
    depths = 1.0 / kf.idepth[idx]

    covered = _coverage_mask(scene, kf, K, px, depths)
    report.covered = int(covered.sum())
    keep = ~covered
    idx = idx[keep]
    px = px[keep]
    depths = depths[keep]
    if idx.size == 0:
        return report

    X_cam = unproject(K, px.astype(np.float64), 1.0 / depths)
    X_world = kf.pose.apply(X_cam)
    colors = kf.color[px[:, 1], px[:, 0]]

    if variant in ("knn", "const"):
        splats = []
        for i in range(len(idx)):
            if variant == "knn" and len(idx) > knn_k:
                d = np.linalg.norm(X_world - X_world[i], axis=1)
                d.sort()
                scale = float(d[1 : knn_k + 1].mean())
            else:
                scale = const_scale_px * depths[i] / K.fx
            sp = fallback_splat(X_world[i], depths[i], colors[i], K, kf.pose)
            splats.append(
                Splat(
                    mean=sp.mean, tan_u=sp.tan_u, tan_v=sp.tan_v,
                    scale_u=max(scale, 1e-9), scale_v=max(scale, 1e-9),
                    opacity=FALLBACK_OPACITY, color=sp.color,
                )
            )
        for sp in splats:
            scene.add_splat(sp)
        report.added = len(splats)
        report.full_path = len(splats)
        return report

    grad_by_id = {kf.kf_id: kf.grad0}
    targets = _covisible_targets(kf, window, K, idx, variant)

    from ..core import image_gradient

    for i in range(len(idx)):
        color = colors[i]
        try:
            views = []
            try:
                s2d_host = estimate_sigma2d(
                    kf.image0, kf.grad0, px[i].astype(np.float64), radius=patch_radius
                )
                views.append((s2d_host, kf.pose, K))
                report.fit_residuals.append(s2d_host.residual)
            except (InsufficientSupport, FitRejected):
                pass
            for other, uv in targets[i]:
                if other.kf_id not in grad_by_id:
                    grad_by_id[other.kf_id] = image_gradient(other.image0)
                try:
                    s2d = estimate_sigma2d(
                        other.image0, grad_by_id[other.kf_id], uv, radius=patch_radius
                    )
                except (InsufficientSupport, FitRejected):
                    continue
                views.append((s2d, other.pose, K))
            if not views:
                raise InsufficientSupport("no view produced a usable fit")

            if len(views) >= 2:
                try:
                    s3d = lift_sigma3d(views, X_world[i])
                except RankDeficient:
                    s3d = single_view_sigma3d(
                        views[0][0], views[0][1], K, X_world[i]
                    )
            else:
                s3d = single_view_sigma3d(views[0][0], views[0][1], K, X_world[i])

            corrected = correct_covariance(s3d.matrix)
            cam_centers = np.mean(
                [v[1].translation for v in views], axis=0
            )
            splat = covariance_to_splat(
                corrected, X_world[i], color,
                preset=preset, camera_center=cam_centers,
                use_sqrt_scales=use_sqrt_scales,
            )
            scene.add_splat(splat)
            report.full_path += 1
        except (InsufficientSupport, FitRejected, InvalidCovariance, RankDeficient):
            scene.add_splat(fallback_splat(X_world[i], depths[i], color, K, kf.pose))
            report.fallback += 1
        report.added += 1
    return report

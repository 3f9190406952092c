"""Two-frame direct image alignment (coarse-to-fine Levenberg-Marquardt).

Optimizes the new frame's world-from-camera pose plus its affine brightness
(a, b) against one reference keyframe's active points, minimizing the Huber
photometric energy over the 8-point pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Intrinsics, Pose
from ..errors import TrackingLost
from .residual import (
    OUTLIER_ENERGY,
    huber_energy,
    huber_weight,
    pose_jacobian_target,
    prepare_host_points,
    projection_rows,
    warp_residuals,
)
from .types import Keyframe


@dataclass
class AlignReport:
    energy: float = np.inf
    mean_energy: float = np.inf
    iterations: int = 0
    inlier_fraction: float = 0.0
    converged: bool = False
    level_energies: list = field(default_factory=list)


# weak zero-priors on (a, b): without them a structureless target is fully
# "explained" by s -> 0, b -> mean intensity
PRIOR_A = 10.0
PRIOR_B = 10.0


def _evaluate(host, img_t, ref, pose, a, b, idepth, exposure, ref_exposure):
    rel = pose.inverse() @ ref.pose
    s = (exposure * np.exp(a)) / (ref_exposure * np.exp(ref.a))
    wr = warp_residuals(host, img_t, rel, idepth, s, ref.b, b)
    mask = wr.valid & np.repeat(wr.point_valid, 8)
    energy = float(huber_energy(wr.r[mask]).sum()) + PRIOR_A * a * a + PRIOR_B * b * b
    return wr, mask, energy


def align_frame(
    ref: Keyframe,
    target_pyramid,
    target_exposure: float,
    K: Intrinsics,
    init_pose: Pose,
    a_init: float = 0.0,
    b_init: float = 0.0,
    max_iterations: int = 15,
    min_inlier_fraction: float = 0.3,
):
    """Align a new frame against `ref`; returns (pose, a, b, AlignReport).

    Raises TrackingLost when the optimization cannot decrease the energy at
    any damping value while fewer than `min_inlier_fraction` of the points
    are photometric inliers.
    """
    idx = np.nonzero(ref.active_mask())[0]
    if idx.size < 8:
        raise TrackingLost(f"reference keyframe has {idx.size} usable points")
    idepth = ref.idepth[idx]

    pose, a, b = init_pose, float(a_init), float(b_init)
    report = AlignReport()
    n_levels = target_pyramid.num_levels
    stalled_finest = False

    for level in reversed(range(n_levels)):
        host = prepare_host_points(ref, K, level, idx)
        img_t = target_pyramid.level(level)
        lam = 1e-4
        wr, mask, energy = _evaluate(
            host, img_t, ref, pose, a, b, idepth, target_exposure, ref.exposure
        )
        last_improved = True
        for _ in range(max_iterations):
            if not np.any(mask):
                break
            w = huber_weight(wr.r) * mask
            gX = projection_rows(host.K, wr.Xt, wr.gu, wr.gv)
            X_w = pose.apply(wr.Xt)
            J = np.empty((wr.r.size, 8))
            J[:, :6] = pose_jacobian_target(gX, X_w, pose.rotation)
            J[:, 6] = -wr.scale * (host.host_int - ref.b)
            J[:, 7] = -1.0
            Jw = J * w[:, None]
            H = J.T @ Jw
            g = Jw.T @ wr.r
            H[6, 6] += PRIOR_A
            H[7, 7] += PRIOR_B
            g[6] += PRIOR_A * a
            g[7] += PRIOR_B * b

            improved = False
            for _trial in range(6):
                Hd = H + lam * np.diag(np.maximum(np.diag(H), 1e-12))
                try:
                    delta = np.linalg.solve(Hd, -g)
                except np.linalg.LinAlgError:
                    lam *= 10
                    continue
                pose_t = pose.retract(delta[:6])
                a_t = a + delta[6]
                b_t = b + delta[7]
                wr_t, mask_t, energy_t = _evaluate(
                    host, img_t, ref, pose_t, a_t, b_t, idepth,
                    target_exposure, ref.exposure,
                )
                if energy_t < energy:
                    pose, a, b = pose_t, a_t, b_t
                    wr, mask, energy = wr_t, mask_t, energy_t
                    lam = max(lam / 3, 1e-7)
                    improved = True
                    break
                lam *= 5
            report.iterations += 1
            last_improved = improved
            if not improved:
                break
            if np.linalg.norm(delta) < 1e-10:
                break
        report.level_energies.append(energy)
        if level == 0:
            wr, mask, energy = _evaluate(
                host, img_t, ref, pose, a, b, idepth, target_exposure, ref.exposure
            )
            inliers = wr.point_valid & (wr.energy < OUTLIER_ENERGY)
            report.inlier_fraction = float(inliers.mean()) if idx.size else 0.0
            report.energy = energy
            n_valid = int((wr.valid & np.repeat(wr.point_valid, 8)).sum())
            report.mean_energy = energy / max(n_valid, 1)

    # at termination the optimizer has either stalled (no damping value
    # decreased the energy) or converged; a terminal state with too few
    # photometric inliers means the frame could not be tracked
    if report.inlier_fraction < min_inlier_fraction:
        raise TrackingLost(
            f"alignment ended with inlier fraction {report.inlier_fraction:.2f}"
        )
    report.converged = True
    return pose, a, b, report


def perturbation_ladder(base: Pose, angle_deg: float = 5.0):
    """Identity-centered recovery attempts: 26 small rotations around base."""
    out = []
    step = np.deg2rad(angle_deg)
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if i == j == k == 0:
                    continue
                axis = np.array([i, j, k], dtype=np.float64)
                axis *= step / np.linalg.norm(axis)
                out.append(Pose.exp(np.r_[np.zeros(3), axis]) @ base)
    return out


def robust_align(
    ref,
    target_pyramid,
    target_exposure,
    K,
    init_pose,
    accept_inlier_fraction: float = 0.6,
    min_inlier_fraction: float = 0.3,
    **kwargs,
):
    """align_frame with the recovery ladder: init pose, then identity-motion
    (the reference pose itself), then 26 rotation perturbations.

    A rung is accepted immediately when its inlier fraction reaches
    `accept_inlier_fraction`; otherwise the best rung by inlier fraction is
    kept, and TrackingLost is raised when even that stays below
    `min_inlier_fraction`.
    """
    attempts = [init_pose, ref.pose] + perturbation_ladder(ref.pose)
    best = None
    last_error = None
    for guess in attempts:
        try:
            result = align_frame(
                ref, target_pyramid, target_exposure, K, guess,
                min_inlier_fraction=min_inlier_fraction, **kwargs,
            )
        except TrackingLost as e:
            last_error = e
            continue
        if result[3].inlier_fraction >= accept_inlier_fraction:
            return result
        if best is None or result[3].inlier_fraction > best[3].inlier_fraction:
            best = result
    if best is not None and best[3].inlier_fraction >= min_inlier_fraction:
        return best
    raise last_error if last_error is not None else TrackingLost(
        "no alignment attempt reached the inlier threshold"
    )

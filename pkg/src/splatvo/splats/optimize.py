"""Scene optimization: Adam over reparameterized splat parameters, plus the
densify/prune schedule borrowed from the original splatting formulation.

Parameters are optimized through unconstrained transforms: scales through
log, opacity through logit. After every step the scene is re-projected onto
the invariant set (frame orthonormalized, scales ordered and positive).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Intrinsics, Pose
from ..errors import EmptyScene
from .loss import e_step_loss
from .model import GaussianScene
from .rasterize import SplatGrads, apply_rotation_tangent, backward, rasterize

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8

# per-parameter learning rates; the mean rate additionally scales with the
# scene extent
LR_MEAN = 1.6e-4
LR_FRAME = 1e-3
LR_SCALE = 5e-3
LR_OPACITY = 5e-2
LR_COLOR = 2.5e-3

_LOGIT_CLAMP = (1e-4, 1.0 - 1e-4)


@dataclass
class EStepFrame:
    """One keyframe's inputs to the scene loss."""

    pose: Pose
    K: Intrinsics
    image: np.ndarray  # (H, W, 3) ground-truth RGB
    depth_pixels: np.ndarray | None = None  # (M, 2) int (u, v)
    depth_values: np.ndarray | None = None  # (M,)
    kf_id: int = -1


@dataclass
class EStepReport:
    loss_trace: list = field(default_factory=list)
    per_frame_loss: dict = field(default_factory=dict)
    rejected_steps: int = 0
    iterations: int = 0
    last_renders: dict = field(default_factory=dict)


def _collect_grads(scene, frames, lam, lam_d, lam_n, keep_renders=None):
    """Mean loss and summed parameter gradients over a list of frames."""
    n = len(scene)
    total = 0.0
    g = SplatGrads(
        mean=np.zeros((n, 3)),
        rot=np.zeros((n, 2)),
        scale_u=np.zeros(n),
        scale_v=np.zeros(n),
        opacity=np.zeros(n),
        color=np.zeros((n, 3)),
    )
    per_frame = {}
    for fr in frames:
        render = rasterize(scene, fr.pose, fr.K)
        res = e_step_loss(
            render,
            fr.image,
            fr.depth_pixels,
            fr.depth_values,
            lam=lam,
            lam_d=lam_d,
            lam_n=lam_n,
            with_grad=True,
        )
        gk = backward(
            render, d_color=res.d_color, d_depth=res.d_depth, d_normal=res.d_normal
        )
        total += res.total
        per_frame[fr.kf_id] = res
        g.mean += gk.mean
        g.rot += gk.rot
        g.scale_u += gk.scale_u
        g.scale_v += gk.scale_v
        g.opacity += gk.opacity
        g.color += gk.color
        if keep_renders is not None:
            keep_renders[fr.kf_id] = render
    scale = 1.0 / max(len(frames), 1)
    total *= scale
    for name in ("mean", "rot", "scale_u", "scale_v", "opacity", "color"):
        setattr(g, name, getattr(g, name) * scale)
    return total, g, per_frame


def _snapshot(scene):
    return (
        scene.means.copy(),
        scene.tan_u.copy(),
        scene.tan_v.copy(),
        scene.scales.copy(),
        scene.opacity.copy(),
        scene.colors.copy(),
        scene.opt_m.copy(),
        scene.opt_v.copy(),
        scene.opt_steps.copy(),
    )


def _restore(scene, snap):
    (
        scene.means,
        scene.tan_u,
        scene.tan_v,
        scene.scales,
        scene.opacity,
        scene.colors,
        scene.opt_m,
        scene.opt_v,
        scene.opt_steps,
    ) = (a.copy() for a in snap)


def adam_step(scene: GaussianScene, g: SplatGrads, extent: float, lr_scale=1.0) -> None:
    """One Adam update over the 11-parameter per-splat encoding.

    Gradients arrive with respect to the raw parameters; the log / logit
    chains are applied here, and the step is taken in transformed space.
    lr_scale may be a scalar or an 11-vector (per-parameter multiplier).
    """
    su = scene.scales[:, 0]
    sv = scene.scales[:, 1]
    op = np.clip(scene.opacity, *_LOGIT_CLAMP)

    grad = np.zeros((len(scene), 11))
    grad[:, 0:3] = g.mean
    grad[:, 3:5] = g.rot
    grad[:, 5] = g.scale_u * su  # d/d log s = s * d/d s
    grad[:, 6] = g.scale_v * sv
    grad[:, 7] = g.opacity * op * (1.0 - op)  # d/d logit
    grad[:, 8:11] = g.color

    scene.opt_steps += 1
    t = scene.opt_steps.astype(np.float64)[:, None]
    scene.opt_m = ADAM_B1 * scene.opt_m + (1 - ADAM_B1) * grad
    scene.opt_v = ADAM_B2 * scene.opt_v + (1 - ADAM_B2) * grad**2
    m_hat = scene.opt_m / (1 - ADAM_B1**t)
    v_hat = scene.opt_v / (1 - ADAM_B2**t)
    step = m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    lr = np.array(
        [LR_MEAN * extent] * 3
        + [LR_FRAME] * 2
        + [LR_SCALE] * 2
        + [LR_OPACITY]
        + [LR_COLOR] * 3
    ) * np.asarray(lr_scale, dtype=np.float64)

    upd = lr[None, :] * step
    scene.means = scene.means - upd[:, 0:3]
    scene.tan_u, scene.tan_v = apply_rotation_tangent(
        scene.tan_u, scene.tan_v, -upd[:, 3:5]
    )
    scene.scales = scene.scales * np.exp(-upd[:, 5:7])
    logit = np.log(op / (1.0 - op)) - upd[:, 7]
    scene.opacity = 1.0 / (1.0 + np.exp(-logit))
    scene.colors = np.clip(scene.colors - upd[:, 8:11], 0.0, 1.0)
    scene.canonicalize()

    # densification statistics: mean positional-gradient norm per render
    gnorm = np.linalg.norm(g.mean, axis=1)
    seen = gnorm > 0
    scene.grad_accum[seen] += gnorm[seen]
    scene.grad_count[seen] += 1


def optimize_e_step(
    scene: GaussianScene,
    frames: list,
    iterations: int,
    extent: float | None = None,
    lam: float = 0.2,
    lam_d: float = 500.0,
    lam_n: float = 0.1,
    mode: str = "batch",
    monotone_guard: bool = True,
    rng: np.random.Generator | None = None,
    keep_renders: bool = False,
) -> EStepReport:
    """Run `iterations` Adam steps against a keyframe batch.

    mode "batch": every step uses the mean gradient over all frames; with
    monotone_guard the step is reverted (and retried at a smaller rate) when
    the evaluated batch loss increases, so accepted steps never increase it.
    mode "cycle": each step uses one frame, round-robin (or uniformly sampled
    when an rng is supplied); the guard is inactive since the per-step
    objective changes.
    """
    scene.require_nonempty()
    if not frames:
        raise ValueError("need at least one keyframe")
    if extent is None:
        extent = scene_extent(frames)

    report = EStepReport()
    renders = report.last_renders if keep_renders else None
    guard = mode == "batch" and monotone_guard
    best_loss = None
    best_snap = None
    lr_scale = 1.0
    for it in range(iterations):
        if mode == "cycle":
            if rng is not None:
                batch = [frames[int(rng.integers(len(frames)))]]
            else:
                batch = [frames[it % len(frames)]]
        else:
            batch = frames
        loss, g, per_frame = _collect_grads(
            scene, batch, lam, lam_d, lam_n, keep_renders=renders
        )
        if guard and best_loss is not None and loss > best_loss:
            # reject: return to the best accepted state and step more gently
            _restore(scene, best_snap)
            report.rejected_steps += 1
            lr_scale = max(0.25 * lr_scale, 1e-3)
            loss, g, per_frame = _collect_grads(
                scene, batch, lam, lam_d, lam_n, keep_renders=renders
            )
        elif guard:
            best_loss = loss
            best_snap = _snapshot(scene)
            lr_scale = min(1.0, 2.0 * lr_scale)
        adam_step(scene, g, extent, lr_scale=lr_scale)
        report.loss_trace.append(loss)
        report.per_frame_loss.update({k: v.total for k, v in per_frame.items()})
        report.iterations += 1
    return report


def scene_extent(frames: list) -> float:
    """Scene scale for the mean learning rate: camera spread + mean depth."""
    centers = np.array([fr.pose.translation for fr in frames])
    spread = 0.0
    if len(centers) > 1:
        spread = float(np.max(np.linalg.norm(centers - centers.mean(axis=0), axis=1)))
    depths = [
        float(np.median(fr.depth_values))
        for fr in frames
        if fr.depth_values is not None and len(fr.depth_values) > 0
    ]
    depth = float(np.median(depths)) if depths else 1.0
    return max(spread + depth, 1e-6)


def densify_and_prune(
    scene: GaussianScene,
    extent: float,
    grad_threshold: float = 2e-4,
    min_iters: int = 100,
    scale_fraction: float = 0.01,
    split_factor: float = 1.6,
    prune_opacity: float = 0.005,
    prune_footprint: float = 0.2,
    view: tuple | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Clone small / split large splats with high positional gradients, then
    prune near-transparent or oversized ones. Statistics reset afterwards.

    view: optional (pose, K) used to measure projected footprints for the
    oversize prune; without it that prune is skipped.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    stats = {"cloned": 0, "split": 0, "pruned": 0}
    if len(scene) == 0:
        return stats

    eligible = scene.grad_count >= min_iters
    mean_grad = np.where(
        scene.grad_count > 0, scene.grad_accum / np.maximum(scene.grad_count, 1), 0.0
    )
    hot = eligible & (mean_grad > grad_threshold)

    big = scene.scales[:, 0] > scale_fraction * extent
    clone_mask = hot & ~big
    split_mask = hot & big

    if np.any(clone_mask):
        idx = np.nonzero(clone_mask)[0]
        scene.add(
            scene.means[idx],
            scene.tan_u[idx],
            scene.tan_v[idx],
            scene.scales[idx],
            scene.opacity[idx],
            scene.colors[idx],
        )
        stats["cloned"] = int(idx.size)

    if np.any(split_mask):
        idx = np.nonzero(split_mask)[0]
        loc = rng.normal(0.0, 1.0, (idx.size, 2)) * scene.scales[idx]
        offset = loc[:, 0:1] * scene.tan_u[idx] + loc[:, 1:2] * scene.tan_v[idx]
        child_scales = scene.scales[idx] / split_factor
        for sgn in (+1.0, -1.0):
            scene.add(
                scene.means[idx] + sgn * offset,
                scene.tan_u[idx],
                scene.tan_v[idx],
                child_scales,
                scene.opacity[idx],
                scene.colors[idx],
            )
        stats["split"] = int(idx.size)
        # parents are replaced by their two children
        keep = np.ones(len(scene), dtype=bool)
        keep[idx] = False
        scene.keep(keep)

    drop = scene.opacity < prune_opacity
    if view is not None and len(scene) > 0:
        pose, K = view
        mu_cam = (scene.means - pose.translation) @ pose.rotation
        z = np.maximum(mu_cam[:, 2], 1e-9)
        # conservative isotropic footprint estimate from the major axis
        radius_px = 3.33 * scene.scales[:, 0] * max(K.fx, K.fy) / z
        area_frac = np.pi * radius_px**2 / (K.width * K.height)
        drop |= (mu_cam[:, 2] > 0) & (area_frac > prune_footprint)
    if np.any(drop):
        stats["pruned"] = int(drop.sum())
        scene.keep(~drop)

    scene.grad_accum[:] = 0.0
    scene.grad_count[:] = 0
    return stats

"""Keyframe selection from field-of-view, translation, and exposure change."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Intrinsics, Pose
from .types import Keyframe

T_FLOW = 1.5  # px at level 0
T_FLOW_T = 1.5
T_BRIGHTNESS = 0.2
W_FLOW = 1.0
W_FLOW_T = 1.0
W_BRIGHTNESS = 1.0


@dataclass
class KeyframeScore:
    flow: float
    flow_translation: float
    brightness: float
    score: float
    decision: bool


def _mean_flow(kf: Keyframe, rel: Pose, K: Intrinsics) -> float:
    idx = kf.active_mask()
    if not np.any(idx):
        return 0.0
    px = kf.px[idx].astype(np.float64)
    rays = np.stack(
        [(px[:, 0] - K.cx) / K.fx, (px[:, 1] - K.cy) / K.fy, np.ones(len(px))],
        axis=-1,
    )
    X = rays / kf.idepth[idx][:, None]
    Xt = X @ rel.rotation.T + rel.translation
    ok = Xt[:, 2] > 1e-6
    if not np.any(ok):
        return np.inf  # points behind the camera: force a keyframe
    u = K.fx * Xt[ok, 0] / Xt[ok, 2] + K.cx
    v = K.fy * Xt[ok, 1] / Xt[ok, 2] + K.cy
    return float(np.hypot(u - px[ok, 0], v - px[ok, 1]).mean())


def keyframe_decision(
    last_kf: Keyframe,
    pose: Pose,
    a: float,
    exposure: float,
    K: Intrinsics,
    t_flow: float = T_FLOW,
    t_flow_t: float = T_FLOW_T,
    t_brightness: float = T_BRIGHTNESS,
    weights: tuple = (W_FLOW, W_FLOW_T, W_BRIGHTNESS),
) -> KeyframeScore:
    """Score > = 1 selects a keyframe (ties prefer keyframing).

    Terms: mean optical flow of the last keyframe's points, the same flow
    with the rotation removed (translation-induced parallax), and the log
    brightness ratio including exposure.
    """
    rel = pose.inverse() @ last_kf.pose
    flow = _mean_flow(last_kf, rel, K)
    rel_t = Pose(np.eye(3), rel.translation)
    flow_t = _mean_flow(last_kf, rel_t, K)
    brightness = abs(
        np.log((exposure * np.exp(a)) / (last_kf.exposure * np.exp(last_kf.a)))
    )
    w_f, w_t, w_a = weights
    score = w_f * flow / t_flow + w_t * flow_t / t_flow_t + w_a * brightness / t_brightness
    return KeyframeScore(
        flow=flow,
        flow_translation=flow_t,
        brightness=brightness,
        score=float(score),
        decision=bool(score >= 1.0),
    )

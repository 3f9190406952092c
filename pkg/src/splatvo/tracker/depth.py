"""Inverse-depth initialization and rendered-depth fusion.

New candidate points get their inverse depth from a discrete search along
the epipolar line against one prior keyframe (pattern-SSD over log-spaced
hypotheses) refined by a few scalar Gauss-Newton steps. The M-step fusion
averages bundle-adjusted inverse depths with splat-map rendered depths by
inverse variance, behind a relative-disagreement gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Intrinsics
from .residual import (
    OUTLIER_ENERGY,
    huber_weight,
    idepth_jacobian,
    prepare_host_points,
    projection_rows,
    warp_residuals,
)
from .types import Keyframe

IDEPTH_RANGE = (0.1, 10.0)
IDEPTH_SAMPLES = 64
GN_STEPS = 3
FUSE_GATE = 0.5


@dataclass
class DepthSearchResult:
    idepth: np.ndarray
    variance: np.ndarray
    energy: np.ndarray
    valid: np.ndarray


def search_idepth(
    host: Keyframe,
    other: Keyframe,
    K: Intrinsics,
    idx: np.ndarray,
    idepth_range: tuple = IDEPTH_RANGE,
    samples: int = IDEPTH_SAMPLES,
    gn_steps: int = GN_STEPS,
    range_scale: float = 1.0,
) -> DepthSearchResult:
    """Line search over inverse depth for `host.px[idx]` against `other`.

    The search range is idepth_range * range_scale (callers pass the median
    scene inverse depth so the default [0.1, 10] spans around it), sampled
    geometrically. Hypotheses are scored by pattern Huber energy; the best
    is refined by `gn_steps` scalar Gauss-Newton steps. Variance is the
    inverse curvature of the final step, and points whose refined energy
    stays above the outlier threshold are flagged invalid.
    """
    lo, hi = idepth_range[0] * range_scale, idepth_range[1] * range_scale
    hyps = np.geomspace(lo, hi, samples)
    hostdata = prepare_host_points(host, K, 0, idx)
    rel = other.pose.inverse() @ host.pose
    s = other.brightness_scale_from(host)
    img = other.pyramid.level(0)
    n = idx.size

    best_energy = np.full(n, np.inf)
    best_idepth = np.full(n, hyps[0])
    for rho in hyps:
        wr = warp_residuals(hostdata, img, rel, np.full(n, rho), s, host.b, other.b)
        e = np.where(wr.point_valid, wr.energy, np.inf)
        better = e < best_energy
        best_energy = np.where(better, e, best_energy)
        best_idepth = np.where(better, rho, best_idepth)

    rho = best_idepth.copy()
    curvature = np.full(n, 1e-6)
    for _ in range(gn_steps):
        wr = warp_residuals(hostdata, img, rel, rho, s, host.b, other.b)
        gX = projection_rows(hostdata.K, wr.Xt, wr.gu, wr.gv)
        Jr = idepth_jacobian(gX, hostdata.rays, np.repeat(rho, 8), rel.rotation)
        w = huber_weight(wr.r) * wr.valid
        H = (w * Jr * Jr).reshape(n, 8).sum(axis=1)
        g = (w * Jr * wr.r).reshape(n, 8).sum(axis=1)
        step = np.where(H > 1e-12, -g / np.maximum(H, 1e-12), 0.0)
        # stay within a factor of 2 of the discrete optimum
        rho = np.clip(rho + step, best_idepth * 0.5, best_idepth * 2.0)
        rho = np.clip(rho, lo * 0.5, hi * 2.0)
        curvature = H

    wr = warp_residuals(hostdata, img, rel, rho, s, host.b, other.b)
    energy = wr.energy
    valid = wr.point_valid & (energy < OUTLIER_ENERGY) & (rho > 0)
    variance = np.where(curvature > 1e-12, 1.0 / np.maximum(curvature, 1e-12), 1e6)
    return DepthSearchResult(idepth=rho, variance=variance, energy=energy, valid=valid)


def fuse_depth(
    ba_idepth: np.ndarray,
    ba_variance: np.ndarray,
    rendered_depth: np.ndarray,
    rendered_valid: np.ndarray,
    gate: float = FUSE_GATE,
    sigma_gs: np.ndarray | None = None,
) -> np.ndarray:
    """Inverse-variance average of BA inverse depth with splat-map depth.

    The rendered depth only participates when it agrees with the BA depth to
    within `gate` relative error; otherwise (or when rendered_valid is
    False) the BA value passes through. sigma_gs defaults to the BA standard
    deviation, which makes the accepted case an equal-weight average. The
    result initializes the next bundle adjustment, which then refines it
    without further regularization.
    """
    ba_idepth = np.asarray(ba_idepth, dtype=np.float64)
    scalar = ba_idepth.ndim == 0
    ba_idepth = np.atleast_1d(ba_idepth)
    ba_variance = np.atleast_1d(np.asarray(ba_variance, dtype=np.float64))
    rendered_depth = np.atleast_1d(np.asarray(rendered_depth, dtype=np.float64))
    rendered_valid = np.atleast_1d(np.asarray(rendered_valid, dtype=bool))

    if np.any(ba_idepth <= 0):
        raise ValueError("BA inverse depth must be positive")
    ba_depth = 1.0 / ba_idepth
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_gap = np.abs(ba_depth - rendered_depth) / ba_depth
    accept = rendered_valid & (rendered_depth > 0) & (rel_gap < gate)

    w_ba = 1.0 / np.maximum(ba_variance, 1e-12)
    if sigma_gs is None:
        w_gs = w_ba  # default sigma_gs equals the BA standard deviation
    else:
        w_gs = 1.0 / np.maximum(np.atleast_1d(sigma_gs) ** 2, 1e-12)
    rendered_idepth = np.where(accept, 1.0 / np.maximum(rendered_depth, 1e-12), 0.0)
    fused = (w_ba * ba_idepth + w_gs * rendered_idepth) / (w_ba + w_gs)
    out = np.where(accept, fused, ba_idepth)
    return float(out[0]) if scalar else out

"""Hot tracker kernel: warp host rays into a target image and sample it with
the exact bilinear-interpolant derivative (numba + numpy variants).

Rays are host-camera direction vectors (unit z); X_h = ray / idepth, then
X_t = R X_h + t with (R, t) the target-from-host relative transform. The
sampled gradient is the derivative of bilinear interpolation itself, so
analytic Jacobians of the photometric energy match finite differences.
Invalid samples (behind camera, out of bounds) report valid = False and
zeroed outputs.
"""

import numpy as np

from ..accel import NUMBA_ENABLED


def _warp_sample_loop(img, rays, idepth, R, t, fx, fy, cx, cy, border,
                      valid, out_i, out_gu, out_gv, out_x):
    h, w = img.shape
    n = rays.shape[0]
    for i in range(n):
        valid[i] = False
        out_i[i] = 0.0
        out_gu[i] = 0.0
        out_gv[i] = 0.0
        out_x[i, 0] = 0.0
        out_x[i, 1] = 0.0
        out_x[i, 2] = 0.0
        iv = idepth[i]
        if iv <= 0:
            continue
        x0 = rays[i, 0] / iv
        x1 = rays[i, 1] / iv
        x2 = rays[i, 2] / iv
        X0 = R[0, 0] * x0 + R[0, 1] * x1 + R[0, 2] * x2 + t[0]
        X1 = R[1, 0] * x0 + R[1, 1] * x1 + R[1, 2] * x2 + t[1]
        X2 = R[2, 0] * x0 + R[2, 1] * x1 + R[2, 2] * x2 + t[2]
        out_x[i, 0] = X0
        out_x[i, 1] = X1
        out_x[i, 2] = X2
        if X2 <= 1e-9:
            continue
        u = fx * X0 / X2 + cx
        v = fy * X1 / X2 + cy
        if u < border or u > w - 1 - border or v < border or v > h - 1 - border:
            continue
        xi = int(u)
        yi = int(v)
        if xi > w - 2:
            xi = w - 2
        if yi > h - 2:
            yi = h - 2
        fu = u - xi
        fv = v - yi
        i00 = img[yi, xi]
        i01 = img[yi, xi + 1]
        i10 = img[yi + 1, xi]
        i11 = img[yi + 1, xi + 1]
        top = i00 + fu * (i01 - i00)
        bot = i10 + fu * (i11 - i10)
        valid[i] = True
        out_i[i] = top + fv * (bot - top)
        out_gu[i] = (1.0 - fv) * (i01 - i00) + fv * (i11 - i10)
        out_gv[i] = bot - top


def _warp_sample_np(img, rays, idepth, R, t, fx, fy, cx, cy, border,
                    valid, out_i, out_gu, out_gv, out_x):
    h, w = img.shape
    ok = idepth > 0
    safe_id = np.where(ok, idepth, 1.0)
    X = (rays / safe_id[:, None]) @ R.T + t
    X = np.where(ok[:, None], X, 0.0)
    out_x[:] = X
    ok &= X[:, 2] > 1e-9
    z = np.where(ok, X[:, 2], 1.0)
    u = fx * X[:, 0] / z + cx
    v = fy * X[:, 1] / z + cy
    ok &= (u >= border) & (u <= w - 1 - border) & (v >= border) & (v <= h - 1 - border)
    uc = np.where(ok, u, 0.0)
    vc = np.where(ok, v, 0.0)
    xi = np.minimum(uc.astype(np.int64), w - 2)
    yi = np.minimum(vc.astype(np.int64), h - 2)
    fu = uc - xi
    fv = vc - yi
    i00 = img[yi, xi]
    i01 = img[yi, xi + 1]
    i10 = img[yi + 1, xi]
    i11 = img[yi + 1, xi + 1]
    top = i00 + fu * (i01 - i00)
    bot = i10 + fu * (i11 - i10)
    valid[:] = ok
    out_i[:] = np.where(ok, top + fv * (bot - top), 0.0)
    out_gu[:] = np.where(ok, (1.0 - fv) * (i01 - i00) + fv * (i11 - i10), 0.0)
    out_gv[:] = np.where(ok, bot - top, 0.0)


if NUMBA_ENABLED:
    from numba import njit as _njit

    warp_sample_jit = _njit(cache=True, fastmath=True)(_warp_sample_loop)
    warp_sample = warp_sample_jit
else:
    warp_sample_jit = None
    warp_sample = _warp_sample_np

warp_sample_np = _warp_sample_np

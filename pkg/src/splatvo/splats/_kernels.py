"""Ray-splat rasterization kernels (numba + numpy variants).

Both variants walk the same per-tile depth-sorted splat lists and perform the
same arithmetic per pixel, so their outputs agree to rounding. The backward
kernels re-walk the lists front-to-back and recover suffix sums from the
forward totals instead of storing per-pixel contributor lists.

Geometry, all in the camera frame with unit-z pixel rays d = (dx, dy, 1):
    z    = (n . mu) / (n . d)          ray-plane intersection z-depth
    delta = z * d - mu
    (u, v) = (delta . t_u, delta . t_v) splat-local coordinates
    G    = exp(-((u/s_u)^2 + (v/s_v)^2) / 2)
    alpha = alpha_o * G, skipped below ALPHA_MIN
Compositing is front-to-back with transmittance T; the splat normal enters
the normal buffer flipped to face the camera (sign of -(n . d)).
"""

import math

import numpy as np

from ..accel import NUMBA_ENABLED

ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
Z_NEAR = 1e-6
# alpha_o * G stays below 1/255 outside this Mahalanobis radius (alpha_o <= 1)
RHO2_MAX = 2.0 * math.log(255.0)
DENOM_EPS = 1e-12
ALPHA_CAP_EPS = 1e-12  # clamp on 1 - alpha in backward suffix terms


def _forward_loop(
    mu, tu, tv, nrm, ndotmu, isu2, isv2, su, sv, op, col,
    tile_starts, tile_splats, ntx, tile, H, W, fx, fy, cx, cy,
    out_color, out_dsum, out_alpha, out_nsum, out_T, out_count,
):
    n_tiles = tile_starts.shape[0] - 1
    for ti in range(n_tiles):
        s0 = tile_starts[ti]
        s1 = tile_starts[ti + 1]
        if s1 == s0:
            continue
        tx = ti % ntx
        ty = ti // ntx
        y1 = min((ty + 1) * tile, H)
        x1 = min((tx + 1) * tile, W)
        for py in range(ty * tile, y1):
            dy = (py - cy) / fy
            for px in range(tx * tile, x1):
                dx = (px - cx) / fx
                T = 1.0
                c0 = c1 = c2 = 0.0
                dsum = 0.0
                asum = 0.0
                n0 = n1 = n2 = 0.0
                cnt = 0
                for si in range(s0, s1):
                    k = tile_splats[si]
                    ndotd = nrm[k, 0] * dx + nrm[k, 1] * dy + nrm[k, 2]
                    if abs(ndotd) < DENOM_EPS:
                        continue
                    z = ndotmu[k] / ndotd
                    if z < Z_NEAR:
                        continue
                    d0 = z * dx - mu[k, 0]
                    d1 = z * dy - mu[k, 1]
                    d2 = z - mu[k, 2]
                    uu = d0 * tu[k, 0] + d1 * tu[k, 1] + d2 * tu[k, 2]
                    vv = d0 * tv[k, 0] + d1 * tv[k, 1] + d2 * tv[k, 2]
                    rho2 = uu * uu * isu2[k] + vv * vv * isv2[k]
                    if rho2 > RHO2_MAX:
                        continue
                    alpha = op[k] * math.exp(-0.5 * rho2)
                    if alpha < ALPHA_MIN:
                        continue
                    sgn = -1.0 if ndotd > 0.0 else 1.0
                    w = alpha * T
                    c0 += w * col[k, 0]
                    c1 += w * col[k, 1]
                    c2 += w * col[k, 2]
                    dsum += w * z
                    asum += w
                    wn = w * sgn
                    n0 += wn * nrm[k, 0]
                    n1 += wn * nrm[k, 1]
                    n2 += wn * nrm[k, 2]
                    T *= 1.0 - alpha
                    cnt += 1
                    if T < T_MIN:
                        break
                out_color[py, px, 0] = c0
                out_color[py, px, 1] = c1
                out_color[py, px, 2] = c2
                out_dsum[py, px] = dsum
                out_alpha[py, px] = asum
                out_nsum[py, px, 0] = n0
                out_nsum[py, px, 1] = n1
                out_nsum[py, px, 2] = n2
                out_T[py, px] = T
                out_count[py, px] = cnt


def _backward_loop(
    mu, tu, tv, nrm, ndotmu, isu2, isv2, su, sv, op, col,
    tile_starts, tile_splats, ntx, tile, H, W, fx, fy, cx, cy,
    fin_color, fin_dsum, fin_alpha, fin_nsum,
    gC, gDsum, gA, gNsum,
    g_mu, g_tu, g_tv, g_n, g_su, g_sv, g_op, g_col,
):
    n_tiles = tile_starts.shape[0] - 1
    for ti in range(n_tiles):
        s0 = tile_starts[ti]
        s1 = tile_starts[ti + 1]
        if s1 == s0:
            continue
        tx = ti % ntx
        ty = ti // ntx
        y1 = min((ty + 1) * tile, H)
        x1 = min((tx + 1) * tile, W)
        for py in range(ty * tile, y1):
            dy = (py - cy) / fy
            for px in range(tx * tile, x1):
                gc0 = gC[py, px, 0]
                gc1 = gC[py, px, 1]
                gc2 = gC[py, px, 2]
                gd = gDsum[py, px]
                ga = gA[py, px]
                gn0 = gNsum[py, px, 0]
                gn1 = gNsum[py, px, 1]
                gn2 = gNsum[py, px, 2]
                if (
                    gc0 == 0.0 and gc1 == 0.0 and gc2 == 0.0
                    and gd == 0.0 and ga == 0.0
                    and gn0 == 0.0 and gn1 == 0.0 and gn2 == 0.0
                ):
                    continue
                dx = (px - cx) / fx
                T = 1.0
                pc0 = pc1 = pc2 = 0.0
                pd = 0.0
                pa = 0.0
                pn0 = pn1 = pn2 = 0.0
                for si in range(s0, s1):
                    k = tile_splats[si]
                    ndotd = nrm[k, 0] * dx + nrm[k, 1] * dy + nrm[k, 2]
                    if abs(ndotd) < DENOM_EPS:
                        continue
                    z = ndotmu[k] / ndotd
                    if z < Z_NEAR:
                        continue
                    d0 = z * dx - mu[k, 0]
                    d1 = z * dy - mu[k, 1]
                    d2 = z - mu[k, 2]
                    uu = d0 * tu[k, 0] + d1 * tu[k, 1] + d2 * tu[k, 2]
                    vv = d0 * tv[k, 0] + d1 * tv[k, 1] + d2 * tv[k, 2]
                    rho2 = uu * uu * isu2[k] + vv * vv * isv2[k]
                    if rho2 > RHO2_MAX:
                        continue
                    G = math.exp(-0.5 * rho2)
                    alpha = op[k] * G
                    if alpha < ALPHA_MIN:
                        continue
                    sgn = -1.0 if ndotd > 0.0 else 1.0
                    w = alpha * T

                    pc0 += w * col[k, 0]
                    pc1 += w * col[k, 1]
                    pc2 += w * col[k, 2]
                    pd += w * z
                    pa += w
                    wn = w * sgn
                    pn0 += wn * nrm[k, 0]
                    pn1 += wn * nrm[k, 1]
                    pn2 += wn * nrm[k, 2]

                    # suffix sums over splats behind k
                    sC0 = fin_color[py, px, 0] - pc0
                    sC1 = fin_color[py, px, 1] - pc1
                    sC2 = fin_color[py, px, 2] - pc2
                    sD = fin_dsum[py, px] - pd
                    sA = fin_alpha[py, px] - pa
                    sN0 = fin_nsum[py, px, 0] - pn0
                    sN1 = fin_nsum[py, px, 1] - pn1
                    sN2 = fin_nsum[py, px, 2] - pn2

                    g_col[k, 0] += w * gc0
                    g_col[k, 1] += w * gc1
                    g_col[k, 2] += w * gc2

                    om = 1.0 - alpha
                    if om < ALPHA_CAP_EPS:
                        om = ALPHA_CAP_EPS
                    inv_om = 1.0 / om
                    dLda = (
                        gc0 * (col[k, 0] * T - sC0 * inv_om)
                        + gc1 * (col[k, 1] * T - sC1 * inv_om)
                        + gc2 * (col[k, 2] * T - sC2 * inv_om)
                        + gd * (z * T - sD * inv_om)
                        + ga * (T - sA * inv_om)
                        + gn0 * (sgn * nrm[k, 0] * T - sN0 * inv_om)
                        + gn1 * (sgn * nrm[k, 1] * T - sN1 * inv_om)
                        + gn2 * (sgn * nrm[k, 2] * T - sN2 * inv_om)
                    )

                    g_op[k] += dLda * G
                    dLdG = dLda * op[k]
                    dLdrho2 = -0.5 * G * dLdG
                    dLdu = dLdrho2 * 2.0 * uu * isu2[k]
                    dLdv = dLdrho2 * 2.0 * vv * isv2[k]
                    g_su[k] += dLdrho2 * (-2.0 * uu * uu * isu2[k] / su[k])
                    g_sv[k] += dLdrho2 * (-2.0 * vv * vv * isv2[k] / sv[k])

                    dLdz = gd * w + dLdu * (
                        dx * tu[k, 0] + dy * tu[k, 1] + tu[k, 2]
                    ) + dLdv * (dx * tv[k, 0] + dy * tv[k, 1] + tv[k, 2])
                    dLdz_nd = dLdz / ndotd

                    g_mu[k, 0] += -dLdu * tu[k, 0] - dLdv * tv[k, 0] + dLdz_nd * nrm[k, 0]
                    g_mu[k, 1] += -dLdu * tu[k, 1] - dLdv * tv[k, 1] + dLdz_nd * nrm[k, 1]
                    g_mu[k, 2] += -dLdu * tu[k, 2] - dLdv * tv[k, 2] + dLdz_nd * nrm[k, 2]

                    g_tu[k, 0] += dLdu * d0
                    g_tu[k, 1] += dLdu * d1
                    g_tu[k, 2] += dLdu * d2
                    g_tv[k, 0] += dLdv * d0
                    g_tv[k, 1] += dLdv * d1
                    g_tv[k, 2] += dLdv * d2

                    # z = (n . mu) / (n . d): dz/dn = -delta / (n . d)
                    wn_g = w * sgn
                    g_n[k, 0] += wn_g * gn0 - dLdz_nd * d0
                    g_n[k, 1] += wn_g * gn1 - dLdz_nd * d1
                    g_n[k, 2] += wn_g * gn2 - dLdz_nd * d2

                    T *= om
                    if T < T_MIN:
                        break


def _forward_np(
    mu, tu, tv, nrm, ndotmu, isu2, isv2, su, sv, op, col,
    tile_starts, tile_splats, ntx, tile, H, W, fx, fy, cx, cy,
    out_color, out_dsum, out_alpha, out_nsum, out_T, out_count,
):
    n_tiles = tile_starts.shape[0] - 1
    out_T.fill(1.0)
    for ti in range(n_tiles):
        s0, s1 = tile_starts[ti], tile_starts[ti + 1]
        if s1 == s0:
            continue
        tx, ty = ti % ntx, ti // ntx
        ys = slice(ty * tile, min((ty + 1) * tile, H))
        xs = slice(tx * tile, min((tx + 1) * tile, W))
        yy, xx = np.mgrid[ys, xs]
        dx = (xx - cx) / fx
        dy = (yy - cy) / fy
        T = np.ones_like(dx)
        C = np.zeros(dx.shape + (3,))
        D = np.zeros_like(dx)
        A = np.zeros_like(dx)
        N = np.zeros(dx.shape + (3,))
        cnt = np.zeros(dx.shape, dtype=np.int32)
        for si in range(s0, s1):
            k = tile_splats[si]
            live = T >= T_MIN
            if not live.any():
                break
            ndotd = nrm[k, 0] * dx + nrm[k, 1] * dy + nrm[k, 2]
            safe = np.abs(ndotd) >= DENOM_EPS
            nd = np.where(safe, ndotd, 1.0)
            z = ndotmu[k] / nd
            d0 = z * dx - mu[k, 0]
            d1 = z * dy - mu[k, 1]
            d2 = z - mu[k, 2]
            uu = d0 * tu[k, 0] + d1 * tu[k, 1] + d2 * tu[k, 2]
            vv = d0 * tv[k, 0] + d1 * tv[k, 1] + d2 * tv[k, 2]
            rho2 = uu * uu * isu2[k] + vv * vv * isv2[k]
            alpha = op[k] * np.exp(-0.5 * np.minimum(rho2, RHO2_MAX))
            use = live & safe & (z >= Z_NEAR) & (rho2 <= RHO2_MAX) & (alpha >= ALPHA_MIN)
            if not use.any():
                continue
            alpha = np.where(use, alpha, 0.0)
            sgn = np.where(ndotd > 0.0, -1.0, 1.0)
            w = alpha * T
            C += w[..., None] * col[k]
            D += w * z
            A += w
            N += (w * sgn)[..., None] * nrm[k]
            T = T * (1.0 - alpha)
            cnt += use.astype(np.int32)
        out_color[ys, xs] = C
        out_dsum[ys, xs] = D
        out_alpha[ys, xs] = A
        out_nsum[ys, xs] = N
        out_T[ys, xs] = T
        out_count[ys, xs] = cnt


def _backward_np(
    mu, tu, tv, nrm, ndotmu, isu2, isv2, su, sv, op, col,
    tile_starts, tile_splats, ntx, tile, H, W, fx, fy, cx, cy,
    fin_color, fin_dsum, fin_alpha, fin_nsum,
    gC, gDsum, gA, gNsum,
    g_mu, g_tu, g_tv, g_n, g_su, g_sv, g_op, g_col,
):
    n_tiles = tile_starts.shape[0] - 1
    for ti in range(n_tiles):
        s0, s1 = tile_starts[ti], tile_starts[ti + 1]
        if s1 == s0:
            continue
        tx, ty = ti % ntx, ti // ntx
        ys = slice(ty * tile, min((ty + 1) * tile, H))
        xs = slice(tx * tile, min((tx + 1) * tile, W))
        yy, xx = np.mgrid[ys, xs]
        dx = (xx - cx) / fx
        dy = (yy - cy) / fy
        gC_t = gC[ys, xs]
        gD_t = gDsum[ys, xs]
        gA_t = gA[ys, xs]
        gN_t = gNsum[ys, xs]
        if (
            not gC_t.any() and not gD_t.any()
            and not gA_t.any() and not gN_t.any()
        ):
            continue
        T = np.ones_like(dx)
        pC = np.zeros(dx.shape + (3,))
        pD = np.zeros_like(dx)
        pA = np.zeros_like(dx)
        pN = np.zeros(dx.shape + (3,))
        fC = fin_color[ys, xs]
        fD = fin_dsum[ys, xs]
        fA = fin_alpha[ys, xs]
        fN = fin_nsum[ys, xs]
        for si in range(s0, s1):
            k = tile_splats[si]
            live = T >= T_MIN
            if not live.any():
                break
            ndotd = nrm[k, 0] * dx + nrm[k, 1] * dy + nrm[k, 2]
            safe = np.abs(ndotd) >= DENOM_EPS
            nd = np.where(safe, ndotd, 1.0)
            z = ndotmu[k] / nd
            d0 = z * dx - mu[k, 0]
            d1 = z * dy - mu[k, 1]
            d2 = z - mu[k, 2]
            uu = d0 * tu[k, 0] + d1 * tu[k, 1] + d2 * tu[k, 2]
            vv = d0 * tv[k, 0] + d1 * tv[k, 1] + d2 * tv[k, 2]
            rho2 = uu * uu * isu2[k] + vv * vv * isv2[k]
            G = np.exp(-0.5 * np.minimum(rho2, RHO2_MAX))
            alpha = op[k] * G
            use = live & safe & (z >= Z_NEAR) & (rho2 <= RHO2_MAX) & (alpha >= ALPHA_MIN)
            alpha = np.where(use, alpha, 0.0)
            if not use.any():
                continue
            sgn = np.where(ndotd > 0.0, -1.0, 1.0)
            w = alpha * T

            pC += w[..., None] * col[k]
            pD += w * z
            pA += w
            pN += (w * sgn)[..., None] * nrm[k]

            sC = fC - pC
            sD = fD - pD
            sA = fA - pA
            sN = fN - pN

            g_col[k, 0] += np.sum(w * gC_t[..., 0])
            g_col[k, 1] += np.sum(w * gC_t[..., 1])
            g_col[k, 2] += np.sum(w * gC_t[..., 2])

            om = np.maximum(1.0 - alpha, ALPHA_CAP_EPS)
            dLda = (
                np.sum(gC_t * (col[k][None, None, :] * T[..., None] - sC / om[..., None]), axis=-1)
                + gD_t * (z * T - sD / om)
                + gA_t * (T - sA / om)
                + np.sum(gN_t * ((sgn * T)[..., None] * nrm[k] - sN / om[..., None]), axis=-1)
            )
            dLda = np.where(use, dLda, 0.0)

            g_op[k] += np.sum(dLda * G)
            dLdG = dLda * op[k]
            dLdrho2 = -0.5 * G * dLdG
            dLdu = dLdrho2 * 2.0 * uu * isu2[k]
            dLdv = dLdrho2 * 2.0 * vv * isv2[k]
            g_su[k] += np.sum(dLdrho2 * (-2.0 * uu**2 * isu2[k] / su[k]))
            g_sv[k] += np.sum(dLdrho2 * (-2.0 * vv**2 * isv2[k] / sv[k]))

            ddtu = dx * tu[k, 0] + dy * tu[k, 1] + tu[k, 2]
            ddtv = dx * tv[k, 0] + dy * tv[k, 1] + tv[k, 2]
            gnd = np.where(use, gD_t * w, 0.0)
            dLdz = gnd + dLdu * ddtu + dLdv * ddtv
            dLdz_nd = dLdz / nd

            delta = (d0, d1, d2)
            for a in range(3):
                g_mu[k, a] += np.sum(
                    -dLdu * tu[k, a] - dLdv * tv[k, a] + dLdz_nd * nrm[k, a]
                )
                g_tu[k, a] += np.sum(dLdu * delta[a])
                g_tv[k, a] += np.sum(dLdv * delta[a])
                g_n[k, a] += np.sum(
                    np.where(use, sgn * w * gN_t[..., a], 0.0) - dLdz_nd * delta[a]
                )

            T = T * (1.0 - alpha)


if NUMBA_ENABLED:
    from numba import njit as _njit

    forward_jit = _njit(cache=True, fastmath=True)(_forward_loop)
    backward_jit = _njit(cache=True, fastmath=True)(_backward_loop)
    forward = forward_jit
    backward = backward_jit
else:
    forward_jit = None
    backward_jit = None
    forward = _forward_np
    backward = _backward_np

forward_np = _forward_np
backward_np = _backward_np

"""Pixel selection and photometric residual tests (incl. the Jacobian FD
property check)."""

import numpy as np
import pytest

from conftest import synthetic_pair, tracked_keyframe

from splatvo.core import Intrinsics, Pose, image_gradient
from splatvo.errors import TexturelessInput
from splatvo.tracker import (
    huber_energy,
    huber_weight,
    photometric_residual,
    prepare_host_points,
    select_pixels,
    warp_residuals,
)
from splatvo.tracker import _kernels
from splatvo.tracker.residual import (
    idepth_jacobian,
    pose_jacobian_host,
    pose_jacobian_target,
    projection_rows,
)


class TestSelectPixels:
    def test_checkerboard_selects_edges(self):
        x = np.arange(64)
        img = ((x[:, None] // 8 + x[None, :] // 8) % 2).astype(np.float64)
        px = select_pixels(img, image_gradient(img), target=500)
        assert len(px) >= 30
        mag = np.linalg.norm(image_gradient(img), axis=-1)
        # exhaustive per-cell oracle: every pick beats its cell median + margin
        for (u, v) in px:
            cy, cx = (v // 8) * 8, (u // 8) * 8
            block = mag[cy : cy + 8, cx : cx + 8]
            assert mag[v, u] > np.median(block) + 7 / 255

    def test_constant_image_textureless(self):
        img = np.full((64, 64), 0.5)
        with pytest.raises(TexturelessInput):
            select_pixels(img, image_gradient(img), target=100)

    def test_count_bounded_by_target(self):
        rng = np.random.default_rng(80)
        img = rng.random((64, 64))
        px = select_pixels(img, image_gradient(img), target=17)
        assert len(px) <= 17


class TestPhotometricResidual:
    def test_identical_frames_zero_residual(self):
        kfa, _, K, _ = synthetic_pair()
        clone = _clone_keyframe(kfa, kf_id=1)
        r, ok, valid = photometric_residual(kfa, clone, K, 5)
        assert ok
        np.testing.assert_allclose(r[valid[:8]], 0.0, atol=1e-12)

    def test_b_offset_shifts_residual(self):
        kfa, _, K, _ = synthetic_pair()
        clone = _clone_keyframe(kfa, kf_id=1)
        clone.b = 0.1
        r, ok, valid = photometric_residual(kfa, clone, K, 5)
        assert ok
        np.testing.assert_allclose(r[valid[:8]], -0.1, atol=1e-12)

    def test_gt_pair_residuals_small(self):
        # dataset photometric-consistency oracle: with GT pose + depth the
        # pattern residuals away from texture edges stay below 2/255
        kfa, kfb, K, _ = synthetic_pair()
        idx = np.nonzero(kfa.active_mask())[0]
        host = prepare_host_points(kfa, K, 0, idx)
        rel = kfb.pose.inverse() @ kfa.pose
        wr = warp_residuals(
            host, kfb.pyramid.level(0), rel, kfa.idepth[idx], 1.0, 0.0, 0.0
        )
        r = np.abs(wr.r[wr.valid])
        assert (r < 2 / 255).mean() > 0.9


def _clone_keyframe(kf, kf_id):
    """Same image/pose/points under a new id (identical-frame tests)."""
    import dataclasses

    return dataclasses.replace(kf, kf_id=kf_id)


class TestJacobiansVsFiniteDifferences:
    """Analytic Jacobians of the photometric energy match central FD.

    The energy is summed over a fixed validity mask (the base evaluation's)
    so finite differences measure the smooth function the Jacobians
    linearize, not validity flips at the image border.
    """

    def _resid(self, kfa, kfb, K, idx, pose_t, a_t, b_t, idepth):
        host = prepare_host_points(kfa, K, 0, idx)
        rel = pose_t.inverse() @ kfa.pose
        s = (kfb.exposure * np.exp(a_t)) / (kfa.exposure * np.exp(kfa.a))
        wr = warp_residuals(host, kfb.pyramid.level(0), rel, idepth, s, kfa.b, b_t)
        return wr, host

    @staticmethod
    def _masked_energy(wr, mask):
        return float(huber_energy(wr.r[mask]).sum())

    def test_pose_idepth_ab_jacobians(self):
        rng = np.random.default_rng(81)
        failures = []
        for cfg in range(6):
            kfa, kfb, K, _ = synthetic_pair(
                seed=cfg + 1,
                motion=rng.normal(0, 0.02, 6),
                exposure=(1.0, float(rng.uniform(0.9, 1.1))),
            )
            kfb.a = float(rng.normal(0, 0.05))
            kfb.b = float(rng.normal(0, 0.02))
            idx = np.nonzero(kfa.active_mask())[0][:40]
            idepth = kfa.idepth[idx] * rng.uniform(0.95, 1.05, idx.size)

            wr, host = self._resid(kfa, kfb, K, idx, kfb.pose, kfb.a, kfb.b, idepth)
            mask = wr.valid.copy()
            # exclude samples at non-smooth points of the energy: bilinear
            # cell boundaries (interpolant derivative jumps) and Huber kinks
            z = np.maximum(wr.Xt[:, 2], 1e-9)
            uu = K.fx * wr.Xt[:, 0] / z + K.cx
            vv = K.fy * wr.Xt[:, 1] / z + K.cy
            eps_cell = 1e-4
            fu = uu - np.floor(uu)
            fv = vv - np.floor(vv)
            mask &= (fu > eps_cell) & (fu < 1 - eps_cell)
            mask &= (fv > eps_cell) & (fv < 1 - eps_cell)
            mask &= np.abs(np.abs(wr.r) - 9 / 255) > 1e-5
            w = huber_weight(wr.r) * mask
            gX = projection_rows(host.K, wr.Xt, wr.gu, wr.gv)
            X_w = kfb.pose.apply(wr.Xt)
            Jt = pose_jacobian_target(gX, X_w, kfb.pose.rotation)
            Jh = pose_jacobian_host(gX, X_w, kfb.pose.rotation)
            rel = kfb.pose.inverse() @ kfa.pose
            Jd = idepth_jacobian(gX, host.rays, np.repeat(idepth, 8), rel.rotation)
            Ja = -wr.scale * (host.host_int - kfa.b)
            Jb = -np.ones_like(wr.r)

            h = 1e-6
            wr_grad = 2 * w * wr.r

            def rel_err(analytic, fd):
                return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-4)

            def fd_energy(mutator):
                wp, _ = mutator(+h)
                wm, _ = mutator(-h)
                return (self._masked_energy(wp, mask) - self._masked_energy(wm, mask)) / (2 * h)

            # target pose tangent
            for k in range(6):
                def mut(d, k=k):
                    xi = np.zeros(6)
                    xi[k] = d
                    return self._resid(kfa, kfb, K, idx, kfb.pose.retract(xi), kfb.a, kfb.b, idepth)

                fd = fd_energy(mut)
                an = float(wr_grad @ Jt[:, k])
                if rel_err(an, fd) > 1e-4:
                    failures.append(("target_pose", cfg, k, an, fd))
            # a, b
            fd = fd_energy(lambda d: self._resid(kfa, kfb, K, idx, kfb.pose, kfb.a + d, kfb.b, idepth))
            if rel_err(float(wr_grad @ Ja), fd) > 1e-4:
                failures.append(("a", cfg, float(wr_grad @ Ja), fd))
            fd = fd_energy(lambda d: self._resid(kfa, kfb, K, idx, kfb.pose, kfb.a, kfb.b + d, idepth))
            if rel_err(float(wr_grad @ Jb), fd) > 1e-4:
                failures.append(("b", cfg, float(wr_grad @ Jb), fd))
            # inverse depths (a sample of points)
            for pi in (0, 7, 23):
                def mut(d, pi=pi):
                    dvec = idepth.copy()
                    dvec[pi] += d
                    return self._resid(kfa, kfb, K, idx, kfb.pose, kfb.a, kfb.b, dvec)

                fd = fd_energy(mut)
                an = float(wr_grad.reshape(-1, 8)[pi] @ Jd.reshape(-1, 8)[pi])
                if rel_err(an, fd) > 1e-4:
                    failures.append(("idepth", cfg, pi, an, fd))
            # host pose tangent (BA mode)
            base_pose = kfa.pose
            for k in (0, 2, 4):
                def mut(d, k=k):
                    xi = np.zeros(6)
                    xi[k] = d
                    kfa.pose = base_pose.retract(xi)
                    out = self._resid(kfa, kfb, K, idx, kfb.pose, kfb.a, kfb.b, idepth)
                    kfa.pose = base_pose
                    return out

                fd = fd_energy(mut)
                an = float(wr_grad @ Jh[:, k])
                if rel_err(an, fd) > 1e-4:
                    failures.append(("host_pose", cfg, k, an, fd))
        assert not failures, f"{len(failures)} mismatches, first: {failures[:3]}"


class TestWarpKernelPaths:
    def test_numba_numpy_agree(self):
        if _kernels.warp_sample_jit is None:
            pytest.skip("numba path not enabled")
        rng = np.random.default_rng(82)
        img = rng.random((48, 52))
        n = 100
        rays = np.stack(
            [rng.uniform(-0.4, 0.4, n), rng.uniform(-0.4, 0.4, n), np.ones(n)], axis=-1
        )
        idepth = rng.uniform(0.3, 2.0, n)
        idepth[::17] = -1.0  # invalid entries
        R, t = Pose.exp(rng.normal(0, 0.1, 6)).rotation, rng.normal(0, 0.1, 3)
        outs = []
        for fn in (_kernels.warp_sample_jit, _kernels.warp_sample_np):
            valid = np.zeros(n, dtype=np.bool_)
            oi = np.zeros(n)
            gu = np.zeros(n)
            gv = np.zeros(n)
            X = np.zeros((n, 3))
            fn(img, rays, idepth, R, t, 60.0, 60.0, 25.0, 23.0, 1.0, valid, oi, gu, gv, X)
            outs.append((valid.copy(), oi.copy(), gu.copy(), gv.copy(), X.copy()))
        for a, b in zip(outs[0], outs[1]):
            np.testing.assert_allclose(
                np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), atol=1e-13
            )

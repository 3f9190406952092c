"""Finite-difference verification of the analytic splat gradients.

This is the load-bearing numerical check for the scene optimizer: the full
loss (RGB L1 + D-SSIM + sparse depth L1 + normal consistency) is evaluated
through the rasterizer, and every per-splat parameter gradient is compared
against central finite differences.
"""

import numpy as np
import pytest

from conftest import copy_scene, random_scene, small_intrinsics

from splatvo.core import Pose
from splatvo.splats import apply_rotation_tangent, backward, e_step_loss, rasterize

FD_STEP = 1e-5
RTOL = 1e-3
ATOL = 1e-5


def loss_value(scene, pose, K, gt, dp, dv):
    r = rasterize(scene, pose, K)
    return e_step_loss(r, gt, dp, dv).total


def analytic_grads(scene, pose, K, gt, dp, dv):
    r = rasterize(scene, pose, K)
    res = e_step_loss(r, gt, dp, dv, with_grad=True)
    return res, backward(r, d_color=res.d_color, d_depth=res.d_depth, d_normal=res.d_normal)


def fd_vs_analytic(scene, pose, K, gt, dp, dv, check):
    """Compare every parameter of every splat; returns max relative error."""
    _, g = analytic_grads(scene, pose, K, gt, dp, dv)
    worst = 0.0

    def fd(mutate):
        sp = copy_scene(scene)
        mutate(sp, +FD_STEP)
        lp = loss_value(sp, pose, K, gt, dp, dv)
        sm = copy_scene(scene)
        mutate(sm, -FD_STEP)
        lm = loss_value(sm, pose, K, gt, dp, dv)
        return (lp - lm) / (2 * FD_STEP)

    def compare(name, a, f):
        nonlocal worst
        err = abs(a - f) / (max(abs(a), abs(f)) + ATOL / RTOL)
        worst = max(worst, err)
        check(name, a, f, err)

    n = len(scene)
    for k in range(n):
        for axis in range(3):
            compare(
                f"mean[{k},{axis}]",
                g.mean[k, axis],
                fd(lambda s, h, k=k, a=axis: s.means.__setitem__((k, a), s.means[k, a] + h)),
            )
        for axis in range(2):
            def rot_mut(s, h, k=k, a=axis):
                delta = np.zeros((len(s), 2))
                delta[k, a] = h
                s.tan_u, s.tan_v = apply_rotation_tangent(s.tan_u, s.tan_v, delta)

            compare(f"rot[{k},{axis}]", g.rot[k, axis], fd(rot_mut))
        compare(
            f"scale_u[{k}]",
            g.scale_u[k],
            fd(lambda s, h, k=k: s.scales.__setitem__((k, 0), s.scales[k, 0] + h)),
        )
        compare(
            f"scale_v[{k}]",
            g.scale_v[k],
            fd(lambda s, h, k=k: s.scales.__setitem__((k, 1), s.scales[k, 1] + h)),
        )
        compare(
            f"opacity[{k}]",
            g.opacity[k],
            fd(lambda s, h, k=k: s.opacity.__setitem__(k, s.opacity[k] + h)),
        )
        for axis in range(3):
            compare(
                f"color[{k},{axis}]",
                g.color[k, axis],
                fd(lambda s, h, k=k, a=axis: s.colors.__setitem__((k, a), s.colors[k, a] + h)),
            )
    return worst


class TestGradCheck:
    def test_all_parameters_match_fd(self):
        rng = np.random.default_rng(40)
        K = small_intrinsics(32)
        pose = Pose.identity()
        failures = []

        def check(name, a, f, err):
            if err > RTOL:
                failures.append((name, a, f, err))

        for cfg in range(5):
            scene = random_scene(rng, n=3)
            gt = rng.uniform(0, 1, (32, 32, 3))
            dp = np.stack([rng.integers(4, 28, 6), rng.integers(4, 28, 6)], axis=-1)
            dv = rng.uniform(1.0, 2.5, 6)
            fd_vs_analytic(scene, pose, K, gt, dp, dv, check)
        assert not failures, f"gradient mismatches: {failures[:5]}"

    def test_logit_opacity_chain(self):
        # FD in logit space must match the chained analytic gradient
        rng = np.random.default_rng(41)
        K = small_intrinsics(32)
        pose = Pose.identity()
        scene = random_scene(rng, n=2)
        gt = rng.uniform(0, 1, (32, 32, 3))
        _, g = analytic_grads(scene, pose, K, gt, None, None)
        for k in range(2):
            op = scene.opacity[k]
            theta = np.log(op / (1 - op))
            h = 1e-5
            sp = copy_scene(scene)
            sp.opacity[k] = 1 / (1 + np.exp(-(theta + h)))
            sm = copy_scene(scene)
            sm.opacity[k] = 1 / (1 + np.exp(-(theta - h)))
            fd = (loss_value(sp, pose, K, gt, None, None) - loss_value(sm, pose, K, gt, None, None)) / (2 * h)
            chained = g.opacity[k] * op * (1 - op)
            assert fd == pytest.approx(chained, rel=1e-3, abs=1e-6)

    def test_invisible_splat_has_zero_gradients(self):
        rng = np.random.default_rng(42)
        K = small_intrinsics(32)
        scene = random_scene(rng, n=2)
        # third splat far behind the camera
        scene.add([0, 0, -5.0], [1, 0, 0], [0, 1, 0], [0.3, 0.2], [0.8], [0.5, 0.5, 0.5])
        gt = rng.uniform(0, 1, (32, 32, 3))
        _, g = analytic_grads(scene, Pose.identity(), K, gt, None, None)
        assert np.all(g.mean[2] == 0)
        assert np.all(g.rot[2] == 0)
        assert g.scale_u[2] == 0 and g.scale_v[2] == 0
        assert g.opacity[2] == 0
        assert np.all(g.color[2] == 0)

    def test_color_gradient_sign(self):
        # moving a splat's color toward the target must decrease the L1 term,
        # so the gradient points away from the target
        K = small_intrinsics(32)
        scene = random_scene(np.random.default_rng(43), n=1, op_range=(0.9, 0.95))
        gt = np.zeros((32, 32, 3))
        gt[:] = 0.9  # target brighter than the splat color (<= 0.9)
        scene.colors[0] = [0.2, 0.2, 0.2]
        _, g = analytic_grads(scene, Pose.identity(), K, gt, None, None)
        assert np.all(g.color[0] < 0)

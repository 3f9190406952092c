"""Two-frame alignment tests against ground-truth poses."""

import numpy as np
import pytest

from conftest import synthetic_pair, textured_scene, tracked_keyframe

from splatvo.core import Intrinsics, Pose, so3_log
from splatvo.dataset import render_ground_truth
from splatvo.errors import TrackingLost
from splatvo.tracker import align_frame, robust_align


def rotation_error_deg(pose_a, pose_b):
    return np.rad2deg(np.linalg.norm(so3_log(pose_a.rotation.T @ pose_b.rotation)))


class TestAlignFrame:
    def test_identity_on_identical_frame(self):
        kfa, _, K, _ = synthetic_pair(motion=np.zeros(6))
        pose, a, b, rep = align_frame(
            kfa, kfa.pyramid, kfa.exposure, K, Pose.identity()
        )
        np.testing.assert_allclose(pose.matrix(), np.eye(4), atol=1e-9)
        assert abs(a) < 1e-6 and abs(b) < 1e-6
        assert rep.energy < 1e-12
        assert rep.inlier_fraction > 0.99

    def test_small_translation_recovered(self):
        # GT-pose oracle on noise-free data: 0.01 m translation from identity
        motion = np.array([0.01, 0.0, 0.0, 0.0, 0.0, 0.0])
        kfa, kfb, K, _ = synthetic_pair(motion=motion)
        pose, a, b, rep = align_frame(kfa, kfb.pyramid, kfb.exposure, K, Pose.identity())
        gt = Pose.exp(motion)
        assert np.linalg.norm(pose.translation - gt.translation) < 5e-4
        assert rotation_error_deg(pose, gt) < 0.05

    def test_rotation_perturbation_basin(self):
        # 5 degree initialization error converges to within 0.1 degree
        motion = np.array([0.03, -0.01, 0.01, 0.02, -0.01, 0.015])
        kfa, kfb, K, _ = synthetic_pair(motion=motion)
        gt = Pose.exp(motion)
        bad_init = Pose.exp(np.r_[np.zeros(3), np.deg2rad([5.0, 0, 0])]) @ gt
        pose, _, _, rep = align_frame(kfa, kfb.pyramid, kfb.exposure, K, bad_init)
        assert rotation_error_deg(pose, gt) < 0.1
        assert np.linalg.norm(pose.translation - gt.translation) < 2e-3

    def test_brightness_parameters_recovered(self):
        # dimmed exposure (no saturation clipping) must be absorbed by the
        # explicit exposure term, keeping the learned a near zero
        kfa, kfb, K, _ = synthetic_pair(
            motion=np.array([0.02, 0, 0, 0, 0, 0]), exposure=(1.0, 0.75)
        )
        pose, a, b, rep = align_frame(kfa, kfb.pyramid, kfb.exposure, K, Pose.identity())
        gt = Pose.exp(np.array([0.02, 0, 0, 0, 0, 0]))
        assert np.linalg.norm(pose.translation - gt.translation) < 2e-3
        assert abs(a) < 0.1 and abs(b) < 0.02

    def test_tracking_lost_on_flat_frame(self):
        # structureless target: no photometric descent and no inliers
        from splatvo.core import build_pyramid

        kfa, _, K, _ = synthetic_pair(seed=3)
        flat = build_pyramid(np.full((96, 96), 0.5), 4)
        with pytest.raises(TrackingLost):
            align_frame(kfa, flat, 1.0, K, Pose.identity())

    def test_robust_align_recovers_via_ladder(self):
        motion = np.array([0.02, 0.01, -0.01, 0.01, 0.02, 0.0])
        kfa, kfb, K, _ = synthetic_pair(motion=motion)
        # deliberately terrible init, ladder falls back to ref pose
        bad = Pose.exp(np.array([0.5, -0.4, 0.3, 0.4, -0.5, 0.3]))
        pose, _, _, _ = robust_align(kfa, kfb.pyramid, kfb.exposure, K, bad)
        gt = Pose.exp(motion)
        assert np.linalg.norm(pose.translation - gt.translation) < 2e-3

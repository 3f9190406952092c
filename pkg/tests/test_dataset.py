"""Synthetic dataset and sequence I/O tests."""

import numpy as np
import pytest

from splatvo.core import Intrinsics, Pose, bilinear_sample, image_gradient, project, unproject
from splatvo.dataset import (
    FrameRecord,
    Patch,
    SceneSpec,
    TrajectorySpec,
    generate_sequence,
    load_dataset,
    load_image,
    load_image_sequence,
    read_trajectory,
    render_ground_truth,
    write_dataset,
    write_trajectory,
)
from splatvo.errors import InvalidTrajectory, ParseError

K = Intrinsics(fx=100.0, fy=100.0, cx=47.5, cy=47.5, width=96, height=96)


def frontal_plane_scene(z=2.0, half=3.0, texture="noise", seed=1):
    patch = Patch(
        origin=np.array([-half, -half, z]),
        edge_u=np.array([2 * half, 0.0, 0.0]),
        edge_v=np.array([0.0, 2 * half, 0.0]),
        texture=texture,
        seed=seed,
    )
    return SceneSpec(patches=(patch,))


class TestRenderGroundTruth:
    def test_frontal_plane_depth_constant(self):
        fr = render_ground_truth(frontal_plane_scene(z=2.0), Pose.identity(), K)
        np.testing.assert_allclose(fr.gt_depth.data, 2.0, atol=1e-12)

    def test_exposure_linearity_before_clamp(self):
        # ambient 0.4 keeps the doubled image below 1.0, so clamping is inactive
        scene = SceneSpec(patches=frontal_plane_scene().patches, ambient=0.4)
        a = render_ground_truth(scene, Pose.identity(), K, exposure=1.0)
        b = render_ground_truth(scene, Pose.identity(), K, exposure=2.0)
        np.testing.assert_allclose(b.image.data, 2.0 * a.image.data, atol=1e-12)

    def test_background_pixels_have_zero_depth(self):
        scene = frontal_plane_scene(z=2.0, half=0.5)
        fr = render_ground_truth(scene, Pose.identity(), K)
        assert fr.gt_depth.data[0, 0] == 0.0
        np.testing.assert_allclose(fr.image.data[0, 0], [0.0, 0.0, 0.0])

    def test_deterministic_given_seed(self):
        scene = frontal_plane_scene()
        rng1 = np.random.default_rng(42)
        rng2 = np.random.default_rng(42)
        a = render_ground_truth(scene, Pose.identity(), K, noise_sigma=0.01, rng=rng1)
        b = render_ground_truth(scene, Pose.identity(), K, noise_sigma=0.01, rng=rng2)
        assert np.array_equal(a.image.data, b.image.data)

    def test_multiview_photometric_consistency(self):
        # reproject pixels of frame A into frame B through GT depth + poses;
        # a gradient texture is piecewise-linear in image space, so bilinear
        # resampling is near-exact away from patch and texture edges
        scene = frontal_plane_scene(texture="gradient")
        pose_a = Pose.identity()
        pose_b = Pose.exp(np.array([0.06, -0.04, 0.02, 0.01, 0.015, -0.01]))
        fa = render_ground_truth(scene, pose_a, K)
        fb = render_ground_truth(scene, pose_b, K)
        ia = fa.image.to_intensity().data
        ib = fb.image.to_intensity().data

        checked = 0
        for v in range(8, 88, 7):
            for u in range(8, 88, 7):
                d = fa.gt_depth.data[v, u]
                if d <= 0:
                    continue
                Xc = unproject(K, [float(u), float(v)], 1.0 / d)
                Xw = pose_a.apply(Xc)
                Xb = pose_b.inverse().apply(Xw)
                if Xb[2] <= 0:
                    continue
                pb = project(K, Xb)
                if not (2 <= pb[0] <= 93 and 2 <= pb[1] <= 93):
                    continue
                if fb.gt_depth.data[int(round(pb[1])), int(round(pb[0]))] <= 0:
                    continue
                assert abs(bilinear_sample(ib, pb) - ia[v, u]) < 1e-3
                checked += 1
        assert checked > 50

    def test_gt_depth_pose_epipolar_consistency(self):
        # unproject+transform+project across a frame pair lands on pixels whose
        # GT depth agrees with the transformed point depth
        scene = frontal_plane_scene()
        pose_a = Pose.identity()
        pose_b = Pose.exp(np.array([0.1, 0.02, -0.03, 0.02, -0.01, 0.03]))
        fa = render_ground_truth(scene, pose_a, K)
        fb = render_ground_truth(scene, pose_b, K)
        for v in range(10, 90, 11):
            for u in range(10, 90, 11):
                d = fa.gt_depth.data[v, u]
                if d <= 0:
                    continue
                Xb = pose_b.inverse().apply(pose_a.apply(unproject(K, [u, v], 1.0 / d)))
                if Xb[2] <= 0:
                    continue
                pb = project(K, Xb)
                ui, vi = int(round(pb[0])), int(round(pb[1]))
                if not (1 <= ui < 95 and 1 <= vi < 95):
                    continue
                db = fb.gt_depth.data[vi, ui]
                if db <= 0:
                    continue
                assert abs(db - Xb[2]) < 2e-2  # half-pixel quantization on a tilted view


class TestGenerateSequence:
    def test_identical_waypoints_share_pose(self):
        traj = TrajectorySpec(timestamps=(0.0, 1.0), poses=(Pose.identity(), Pose.identity()))
        frames = generate_sequence(frontal_plane_scene(), traj, K, fps=5)
        for fr in frames:
            np.testing.assert_allclose(fr.gt_pose.matrix(), np.eye(4), atol=1e-15)

    def test_frame_count_30fps_over_1s(self):
        traj = TrajectorySpec(timestamps=(0.0, 1.0), poses=(Pose.identity(), Pose.identity()))
        frames = generate_sequence(frontal_plane_scene(z=2.0, half=1.0), traj, K, fps=30)
        assert len(frames) == 30

    def test_midpoint_pose_matches_tangent_oracle(self):
        a = Pose.identity()
        b = Pose.exp(np.array([0.2, -0.1, 0.05, 0.1, 0.05, -0.08]))
        traj = TrajectorySpec(timestamps=(0.0, 1.0), poses=(a, b))
        mid = traj.pose_at(0.5)
        oracle = a @ Pose.exp(0.5 * (a.inverse() @ b).log())
        np.testing.assert_allclose(mid.matrix(), oracle.matrix(), atol=1e-9)

    def test_invalid_trajectory(self):
        with pytest.raises(InvalidTrajectory):
            TrajectorySpec(timestamps=(0.0,), poses=(Pose.identity(),))
        with pytest.raises(InvalidTrajectory):
            TrajectorySpec(
                timestamps=(0.0, 0.0), poses=(Pose.identity(), Pose.identity())
            )


class TestTrajectoryIO:
    def test_identity_pose_line(self, tmp_path):
        path = tmp_path / "traj.txt"
        write_trajectory(path, [(0.0, Pose.identity())])
        line = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
        assert line == "0.000000000 0 0 0 0 0 0 1"

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(20)
        traj = [(0.1 * k, Pose.exp(rng.normal(0, 0.7, 6))) for k in range(20)]
        path = tmp_path / "traj.txt"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert len(back) == 20
        for (t0, p0), (t1, p1) in zip(traj, back):
            assert t1 == pytest.approx(t0, abs=1e-9)
            np.testing.assert_allclose(p1.matrix(), p0.matrix(), atol=1e-7)

    def test_negated_quaternion_same_rotation(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("0.0 1 2 3 0.5 -0.5 0.5 -0.5\n1.0 1 2 3 -0.5 0.5 -0.5 0.5\n")
        back = read_trajectory(path)
        np.testing.assert_allclose(back[0][1].matrix(), back[1][1].matrix(), atol=1e-12)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "traj.txt"
        path.write_text("0.0 0 0 0 0 0 0 1\nbogus line\n")
        with pytest.raises(ParseError) as exc:
            read_trajectory(path)
        assert exc.value.line == 2


class TestImageSequenceIO:
    def test_numbered_pngs_in_order(self, tmp_path):
        from splatvo.dataset import save_image
        from splatvo.core import Image

        rng = np.random.default_rng(21)
        for k in range(3):
            save_image(tmp_path / f"{k:03d}.png", Image(rng.random((16, 16, 3))))
        frames = load_image_sequence(tmp_path)
        assert len(frames) == 3
        # default timestamps at 30 fps, exposure 1.0
        assert frames[1].timestamp == pytest.approx(1 / 30)
        assert frames[2].timestamp == pytest.approx(2 / 30)
        assert frames[0].exposure == 1.0

    def test_8bit_pgm_normalization(self, tmp_path):
        path = tmp_path / "gray.pgm"
        with open(path, "wb") as f:
            f.write(b"P5\n4 4\n255\n" + bytes([128] * 16))
        img = load_image(path)
        np.testing.assert_allclose(img.data, 128 / 255, atol=1e-6)

    def test_dataset_roundtrip(self, tmp_path):
        scene = frontal_plane_scene()
        traj = TrajectorySpec(
            timestamps=(0.0, 0.5),
            poses=(Pose.identity(), Pose.exp(np.array([0.1, 0, 0, 0, 0, 0]))),
        )
        frames = generate_sequence(scene, traj, K, fps=10)
        write_dataset(tmp_path, frames, K)
        back, K2 = load_dataset(tmp_path)
        assert K2 == K
        assert len(back) == len(frames)
        np.testing.assert_allclose(
            back[2].image.data, frames[2].image.data, atol=1.0 / 255
        )
        np.testing.assert_allclose(
            back[2].gt_depth.data, frames[2].gt_depth.data, atol=2e-4
        )
        np.testing.assert_allclose(
            back[2].gt_pose.matrix(), frames[2].gt_pose.matrix(), atol=1e-7
        )


class TestTexturelessPreset:
    def test_flat_texture_has_no_gradient_inside(self):
        fr = render_ground_truth(
            frontal_plane_scene(texture="flat"), Pose.identity(), K
        )
        g = image_gradient(fr.image.to_intensity().data)
        assert np.abs(g[20:76, 20:76]).max() < 1e-9

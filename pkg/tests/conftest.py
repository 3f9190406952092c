"""Shared builders for splat and tracker tests."""

import numpy as np

from splatvo.core import Intrinsics, Pose
from splatvo.splats import GaussianScene


def textured_scene(seed=1, tilt=0.12):
    """Two tilted blob-textured planes giving depth variation; blob counts
    scale with patch area so the projected structure spacing is ~10 px."""
    from splatvo.dataset import Patch, SceneSpec

    p1 = Patch(
        origin=np.array([-3.0, -3.0, 2.2]),
        edge_u=np.array([6.0, 0.0, -tilt * 6.0]),
        edge_v=np.array([0.0, 6.0, 0.0]),
        texture="blobs",
        blob_count=1400,
        blob_sigma=(0.008, 0.025),
        seed=seed,
    )
    p2 = Patch(
        origin=np.array([-1.0, -1.2, 1.9]),
        edge_u=np.array([2.0, 0.0, 0.4]),
        edge_v=np.array([0.0, 2.2, 0.1]),
        texture="blobs",
        blob_count=160,
        blob_sigma=(0.02, 0.06),
        seed=seed + 7,
    )
    return SceneSpec(patches=(p1, p2))


def tracked_keyframe(kf_id, frame, K, pose, target=200, activate=True):
    """Keyframe with points selected and inverse depths from GT depth."""
    from splatvo.tracker import STATUS_ACTIVE, make_keyframe, select_pixels

    kf = make_keyframe(kf_id, frame, pose)
    px = select_pixels(kf.image0, kf.grad0, target)
    depths = frame.gt_depth.data[px[:, 1], px[:, 0]]
    good = depths > 0
    px = px[good]
    kf.px = px
    kf.idepth = 1.0 / depths[good]
    kf.idepth_var = np.full(len(px), 1e-4)
    kf.status = np.full(len(px), STATUS_ACTIVE if activate else 0, dtype=np.int8)
    return kf


def synthetic_pair(seed=1, motion=None, K=None, exposure=(1.0, 1.0), noise=0.0):
    """Two GT-tracked keyframes of a textured scene with known relative pose."""
    from splatvo.dataset import render_ground_truth

    if K is None:
        K = Intrinsics(110.0, 110.0, 47.5, 47.5, 96, 96)
    if motion is None:
        motion = np.array([0.04, -0.02, 0.01, 0.01, 0.02, -0.005])
    scene = textured_scene(seed)
    pose_a = Pose.identity()
    pose_b = Pose.exp(motion)
    rng = np.random.default_rng(seed) if noise > 0 else None
    fa = render_ground_truth(scene, pose_a, K, exposure=exposure[0], noise_sigma=noise, rng=rng)
    fb = render_ground_truth(scene, pose_b, K, exposure=exposure[1], noise_sigma=noise, rng=rng)
    kfa = tracked_keyframe(0, fa, K, pose_a)
    kfb = tracked_keyframe(1, fb, K, pose_b)
    return kfa, kfb, K, scene


def orthonormal_frame(rng, toward_camera=True):
    """Random orthonormal (t_u, t_v) whose normal has negative z."""
    a = rng.normal(0, 1, 3)
    a /= np.linalg.norm(a)
    b = rng.normal(0, 1, 3)
    b -= (b @ a) * a
    b /= np.linalg.norm(b)
    if toward_camera and np.cross(a, b)[2] > 0:
        b = -b
    return a, b


def random_scene(rng, n=3, z_range=(1.2, 2.5), scale_range=(0.12, 0.4), op_range=(0.3, 0.9)):
    scene = GaussianScene()
    for _ in range(n):
        mu = np.array(
            [rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(*z_range)]
        )
        tu, tv = orthonormal_frame(rng)
        s_u = rng.uniform(*scale_range)
        s_v = rng.uniform(scale_range[0], s_u)
        scene.add(mu, tu, tv, [s_u, s_v], [rng.uniform(*op_range)], rng.uniform(0.1, 0.9, 3))
    return scene


def copy_scene(scene):
    out = GaussianScene()
    if len(scene):
        out.add(
            scene.means.copy(),
            scene.tan_u.copy(),
            scene.tan_v.copy(),
            scene.scales.copy(),
            scene.opacity.copy(),
            scene.colors.copy(),
        )
    return out


def plane_of_splats(z=2.0, grid=5, spacing=0.25, opacity=0.95, tilt=None, color=None):
    """Coplanar splats tiling a plane patch at depth z (world = camera frame)."""
    rngc = np.random.default_rng(99)
    scene = GaussianScene()
    tu = np.array([1.0, 0.0, 0.0])
    tv = np.array([0.0, 1.0, 0.0])
    n = np.array([0.0, 0.0, -1.0])
    if tilt is not None:
        from splatvo.core import so3_exp

        R = so3_exp(tilt)
        tu, tv, n = R @ tu, R @ tv, R @ n
    for i in range(grid):
        for j in range(grid):
            off = ((i - (grid - 1) / 2) * spacing) * tu + ((j - (grid - 1) / 2) * spacing) * tv
            mu = np.array([0.0, 0.0, z]) + off
            c = color if color is not None else rngc.uniform(0.2, 0.9, 3)
            scene.add(mu, tu, tv, [spacing * 0.9, spacing * 0.8], [opacity], c)
    return scene


def small_intrinsics(size=32, f=40.0):
    return Intrinsics(f, f, (size - 1) / 2, (size - 1) / 2, size, size)

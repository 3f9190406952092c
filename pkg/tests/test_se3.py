"""SE(3) and Pose unit tests."""

import numpy as np
import pytest

from splatvo.core import Pose, interpolate, se3_exp, se3_log


class TestExpLog:
    def test_zero_tangent_is_identity(self):
        R, t = se3_exp(np.zeros(6))
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(t, np.zeros(3), atol=1e-15)

    def test_exp_log_roundtrip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            xi = rng.normal(0, 1.0, 6)
            # keep rotation below pi where log is unique
            if np.linalg.norm(xi[3:]) > 3.0:
                xi[3:] *= 3.0 / np.linalg.norm(xi[3:])
            R, t = se3_exp(xi)
            np.testing.assert_allclose(se3_log(R, t), xi, atol=1e-9)

    def test_rotation_is_orthonormal(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            R, _ = se3_exp(rng.normal(0, 2.0, 6))
            np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_small_angle_branch(self):
        xi = np.array([1e-9, -2e-9, 3e-9, 1e-10, -1e-10, 2e-10])
        R, t = se3_exp(xi)
        np.testing.assert_allclose(se3_log(R, t), xi, atol=1e-15)


class TestPose:
    def test_compose_associative(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a, b, c = (Pose.exp(rng.normal(0, 0.5, 6)) for _ in range(3))
            lhs = (a @ b) @ c
            rhs = a @ (b @ c)
            np.testing.assert_allclose(lhs.matrix(), rhs.matrix(), atol=1e-9)

    def test_inverse_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            p = Pose.exp(rng.normal(0, 1.0, 6))
            np.testing.assert_allclose((p @ p.inverse()).matrix(), np.eye(4), atol=1e-9)

    def test_retract_is_left_multiplication(self):
        rng = np.random.default_rng(7)
        p = Pose.exp(rng.normal(0, 0.5, 6))
        xi = rng.normal(0, 0.1, 6)
        np.testing.assert_allclose(
            p.retract(xi).matrix(), (Pose.exp(xi) @ p).matrix(), atol=1e-14
        )

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(8)
        p = Pose.exp(rng.normal(0, 0.5, 6))
        pts = rng.normal(0, 2.0, (10, 3))
        hom = np.c_[pts, np.ones(10)] @ p.matrix().T
        np.testing.assert_allclose(p.apply(pts), hom[:, :3], atol=1e-12)

    def test_validity_check(self):
        assert Pose.identity().is_valid()
        bad = Pose(np.eye(3) * 1.001, np.zeros(3))
        assert not bad.is_valid()


class TestInterpolate:
    def test_midpoint_matches_tangent_oracle(self):
        # oracle: A * exp(log(A^-1 B) / 2)
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = Pose.exp(rng.normal(0, 0.8, 6))
            b = Pose.exp(rng.normal(0, 0.8, 6))
            expected = a @ Pose.exp(0.5 * (a.inverse() @ b).log())
            got = interpolate(a, b, 0.5)
            np.testing.assert_allclose(got.matrix(), expected.matrix(), atol=1e-9)

    def test_endpoints(self):
        rng = np.random.default_rng(10)
        a = Pose.exp(rng.normal(0, 0.5, 6))
        b = Pose.exp(rng.normal(0, 0.5, 6))
        np.testing.assert_allclose(interpolate(a, b, 0.0).matrix(), a.matrix(), atol=1e-12)
        np.testing.assert_allclose(interpolate(a, b, 1.0).matrix(), b.matrix(), atol=1e-12)

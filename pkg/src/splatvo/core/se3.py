"""SO(3)/SE(3) primitives and the rigid camera pose.

Conventions:
  - Pose maps camera-frame points to world frame: X_w = R @ X_c + t.
  - Tangent vectors are 6-vectors (v, omega): translation first, rotation second.
  - Optimizer increments are applied by left multiplication,
    T <- exp(delta) * T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a Taylor fallback near zero."""
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        # 2nd-order Taylor keeps the result orthonormal to machine precision
        return np.eye(3) + W + 0.5 * (W @ W)
    theta = np.sqrt(theta2)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * W
        + ((1.0 - np.cos(theta)) / theta2) * (W @ W)
    )


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; handles the theta -> 0 and theta -> pi limits."""
    cos_theta = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-8:
        w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        return w
    if np.pi - theta < 1e-6:
        # Near pi the antisymmetric part vanishes; recover axis from R + I.
        A = R + np.eye(3)
        axis = A[:, int(np.argmax(np.diag(A)))]
        axis = axis / np.linalg.norm(axis)
        w = theta * axis
        # Fix the sign using the antisymmetric part where it is nonzero.
        v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        if v @ w < 0:
            w = -w
        return w
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return (theta / (2.0 * np.sin(theta))) * v


def _so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    theta = np.sqrt(theta2)
    return (
        np.eye(3)
        + ((1.0 - np.cos(theta)) / theta2) * W
        + ((theta - np.sin(theta)) / (theta2 * theta)) * (W @ W)
    )


def _so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta2 = float(w @ w)
    W = hat(w)
    if theta2 < 1e-16:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    theta = np.sqrt(theta2)
    half = 0.5 * theta
    cot = 1.0 / np.tan(half)
    return np.eye(3) - 0.5 * W + ((1.0 - half * cot) / theta2) * (W @ W)


def se3_exp(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponential map of a (v, omega) tangent; returns (R, t)."""
    v, w = xi[:3], xi[3:]
    R = so3_exp(w)
    t = _so3_left_jacobian(w) @ v
    return R, t


def se3_log(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Inverse of se3_exp; returns the (v, omega) tangent."""
    w = so3_log(R)
    v = _so3_left_jacobian_inv(w) @ t
    return np.concatenate([v, w])


@dataclass(frozen=True)
class Pose:
    """Rigid transform in SE(3), world-from-camera."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def exp(xi: np.ndarray) -> "Pose":
        R, t = se3_exp(np.asarray(xi, dtype=np.float64))
        return Pose(R, t)

    def log(self) -> np.ndarray:
        return se3_log(self.rotation, self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self * other (apply other first)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform camera-frame point(s) (..., 3) to world frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def retract(self, xi: np.ndarray) -> "Pose":
        """Left-multiplicative update exp(xi) * self."""
        return Pose.exp(xi) @ self

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return (
            np.all(np.isfinite(R))
            and np.all(np.isfinite(self.translation))
            and np.allclose(R @ R.T, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol
        )


def interpolate(a: Pose, b: Pose, alpha: float) -> Pose:
    """Geodesic interpolation on SE(3): a * exp(alpha * log(a^-1 b))."""
    delta = (a.inverse() @ b).log()
    return a @ Pose.exp(alpha * delta)

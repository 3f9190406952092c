"""Covariance-based splat initialization: per-view 2D covariance estimation
from image gradients, multi-view lifting to a 3D covariance, and correction
to a valid (positive definite) covariance.

The image intensity around a selected point p is modeled as a 2D Gaussian
blob; its log-intensity gradient is linear in the offset from the center,

    grad log I(r) = -M (r - p),   M = alpha * inv(Sigma2D),

so M is recovered by linear least squares over a small patch. The scale
alpha is left unresolved here (the least squares only constrains M); it is
fixed downstream where the splat opacity is set. Observations of the same
3D point from several keyframes are related to one world covariance through
the projection linearization

    Sigma2D_i = J_i W_i Sigma3D W_i^T J_i^T

which is linear in the six unique entries of Sigma3D and solved as one
weighted least-squares system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Intrinsics, Pose
from ..errors import InsufficientSupport, InvalidCovariance, RankDeficient

PATCH_RADIUS = 4
INTENSITY_FLOOR = 1e-4
MIN_SUPPORT = 6
# anisotropy cap when inverting M: eigenvalues are floored at lambda_max/COND_CAP
COND_CAP = 100.0
COV_EPS = 1e-8


@dataclass
class Sigma2D:
    """Per-view image-plane covariance (up to the shared alpha scale)."""

    matrix: np.ndarray  # 2x2 symmetric, px^2 (scaled by 1/alpha)
    center: np.ndarray  # (u, v) pixel
    alpha: float  # unresolved here; kept at 1.0
    residual: float  # relative RMS of the least-squares fit, in [0, ~1]


@dataclass
class Sigma3D:
    matrix: np.ndarray  # 3x3 symmetric, world frame
    center: np.ndarray  # world point


def estimate_sigma2d(
    image: np.ndarray,
    grad: np.ndarray,
    center,
    radius: int = PATCH_RADIUS,
    floor: float = INTENSITY_FLOOR,
    fit_residual_max: float = 0.995,
) -> Sigma2D:
    """Fit M = alpha * inv(Sigma2D) to the log-intensity gradients around
    `center` and return the (alpha-scaled) 2D covariance inv(M).

    image: (H, W) intensity; grad: (H, W, 2) its gradient field. Pixels
    darker than `floor` or closer than half a pixel to the center are
    excluded. Raises InsufficientSupport below MIN_SUPPORT usable pixels and
    FitRejected when M is indefinite and the relative fit residual exceeds
    fit_residual_max. Inversion floors the eigenvalues of M at
    lambda_max / COND_CAP, which caps the splat anisotropy and keeps
    edge-like patches (rank-deficient M) usable.
    """
    from ..errors import FitRejected

    h, w = image.shape
    cx, cy = float(center[0]), float(center[1])
    x0, x1 = int(np.ceil(cx - radius)), int(np.floor(cx + radius))
    y0, y1 = int(np.ceil(cy - radius)), int(np.floor(cy + radius))
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        raise InsufficientSupport("patch leaves the image")

    xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    xs = xs.ravel()
    ys = ys.ravel()
    dx = xs - cx
    dy = ys - cy
    inten = image[ys, xs]
    gnorm = np.linalg.norm(grad[ys, xs], axis=-1)
    usable = (inten > floor) & (dx**2 + dy**2 > 0.25) & (gnorm > 1e-12)
    if int(usable.sum()) < MIN_SUPPORT:
        raise InsufficientSupport(f"only {int(usable.sum())} usable pixels")

    dx = dx[usable]
    dy = dy[usable]
    gl = grad[ys[usable], xs[usable]] / inten[usable, None]  # grad of log I

    n = dx.size
    A = np.zeros((2 * n, 3))
    b = np.empty(2 * n)
    # gx = -(m11 dx + m12 dy); gy = -(m12 dx + m22 dy)
    A[0::2, 0] = dx
    A[0::2, 1] = dy
    A[1::2, 1] = dx
    A[1::2, 2] = dy
    b[0::2] = -gl[:, 0]
    b[1::2] = -gl[:, 1]

    m, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid_vec = A @ m - b
    scale = float(np.linalg.norm(b))
    residual = float(np.linalg.norm(resid_vec)) / max(scale, 1e-12)

    M = np.array([[m[0], m[1]], [m[1], m[2]]])
    lam, U = np.linalg.eigh(M)
    lam_max = float(lam.max())
    pos_def = bool(lam.min() > 0)
    if not pos_def and residual > fit_residual_max:
        raise FitRejected(f"indefinite fit with residual {residual:.3f}")
    if lam_max <= 0:
        lam = np.abs(lam)
        lam_max = float(lam.max())
        if lam_max <= 0:
            raise FitRejected("vanishing curvature")
    lam = np.maximum(lam, lam_max / COND_CAP)
    sigma = U @ np.diag(1.0 / lam) @ U.T

    return Sigma2D(
        matrix=0.5 * (sigma + sigma.T),
        center=np.array([cx, cy]),
        alpha=1.0,
        residual=residual,
    )


def projection_jacobian(K: Intrinsics, X_cam: np.ndarray) -> np.ndarray:
    """2x3 Jacobian of the pinhole projection at a camera-frame point."""
    x, y, z = X_cam
    return np.array(
        [
            [K.fx / z, 0.0, -K.fx * x / z**2],
            [0.0, K.fy / z, -K.fy * y / z**2],
        ]
    )


def _relation_rows(A: np.ndarray):
    """Rows of the linear map s6 -> (Sigma2D_00, Sigma2D_11, Sigma2D_01).

    s6 packs the symmetric Sigma3D as (s11, s22, s33, s12, s13, s23).
    """
    rows = np.empty((3, 6))
    for r, (a, b) in enumerate(((0, 0), (1, 1), (0, 1))):
        rows[r, 0] = A[a, 0] * A[b, 0]
        rows[r, 1] = A[a, 1] * A[b, 1]
        rows[r, 2] = A[a, 2] * A[b, 2]
        rows[r, 3] = A[a, 0] * A[b, 1] + A[a, 1] * A[b, 0]
        rows[r, 4] = A[a, 0] * A[b, 2] + A[a, 2] * A[b, 0]
        rows[r, 5] = A[a, 1] * A[b, 2] + A[a, 2] * A[b, 1]
    return rows


def _unpack_s6(s: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [s[0], s[3], s[4]],
            [s[3], s[1], s[5]],
            [s[4], s[5], s[2]],
        ]
    )


def lift_sigma3d(observations, X_world: np.ndarray) -> Sigma3D:
    """Stack per-view covariance relations into one weighted least-squares
    solve for the world covariance.

    observations: list of (Sigma2D, Pose, Intrinsics); each contributes the
    three unique entries of its 2x2 relation, weighted by 1 / residual^2.

    Two views structurally constrain only 5 of the 6 entries (the cross term
    between the views' exclusive plane directions is unobservable), so the
    system is solved minimum-norm over its numerical row space. Raises
    RankDeficient when fewer than 5 directions are constrained (a single
    view yields rank 3); callers then fall back to single-view completion.
    """
    X_world = np.asarray(X_world, dtype=np.float64)
    rows = []
    rhs = []
    weights = []
    for s2d, pose, K in observations:
        W = pose.rotation.T  # world -> camera
        X_cam = W @ (X_world - pose.translation)
        if X_cam[2] <= 0:
            continue
        J = projection_jacobian(K, X_cam)
        A = J @ W
        rows.append(_relation_rows(A))
        m = s2d.matrix
        rhs.append([m[0, 0], m[1, 1], m[0, 1]])
        w = 1.0 / max(s2d.residual, 1e-3) ** 2
        weights.append([w, w, w])
    if not rows:
        raise RankDeficient("no usable observations")
    A_full = np.vstack(rows)
    b_full = np.concatenate([np.asarray(r, dtype=np.float64) for r in rhs])
    w_full = np.concatenate([np.asarray(w, dtype=np.float64) for w in weights])

    # column equilibration: the raw coefficients span (f/z)^4 dynamic range,
    # so the rank decision must run on normalized columns
    sw = np.sqrt(w_full)
    Aw = A_full * sw[:, None]
    bw = b_full * sw
    col = np.linalg.norm(Aw, axis=0)
    col = np.where(col > 0, col, 1.0)  # all-zero column: unobserved, solves to 0
    An = Aw / col[None, :]
    U, svals, Vt = np.linalg.svd(An, full_matrices=False)
    rank = int(np.sum(svals >= 1e-6 * svals[0]))
    if rank < 5:
        raise RankDeficient(f"stacked system rank {rank} < 5")
    inv_s = np.where(svals >= 1e-6 * svals[0], 1.0 / np.maximum(svals, 1e-300), 0.0)
    s = (Vt.T @ (inv_s * (U.T @ bw))) / col
    return Sigma3D(matrix=_unpack_s6(s), center=X_world)


def single_view_sigma3d(s2d: Sigma2D, pose: Pose, K: Intrinsics, X_world: np.ndarray) -> Sigma3D:
    """Complete a one-view covariance: back-project the image-plane covariance
    onto the plane orthogonal to the viewing ray and give the ray direction a
    variance equal to the smaller in-plane eigenvalue."""
    X_world = np.asarray(X_world, dtype=np.float64)
    W = pose.rotation.T
    X_cam = W @ (X_world - pose.translation)
    if X_cam[2] <= 0:
        raise InvalidCovariance("point behind the observing camera")
    J = projection_jacobian(K, X_cam)
    A = J @ W
    A_pinv = A.T @ np.linalg.inv(A @ A.T)
    S_plane = A_pinv @ s2d.matrix @ A_pinv.T
    lam = np.linalg.eigvalsh(S_plane)
    lam_in_plane = np.sort(lam)[1:]  # drop the (numerically) zero ray direction
    ray = X_world - pose.translation
    ray = ray / np.linalg.norm(ray)
    S = S_plane + lam_in_plane[0] * np.outer(ray, ray)
    return Sigma3D(matrix=0.5 * (S + S.T), center=X_world)


def correct_covariance(S: np.ndarray, eps: float = COV_EPS) -> np.ndarray:
    """Repair an estimated covariance into a symmetric positive definite one.

    Already-PSD inputs (all eigenvalues >= eps) get eps * I added
    (regularization); otherwise the eigenvalues are clipped at eps.
    """
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)):
        raise InvalidCovariance("non-finite covariance entries")
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    if lam.min() >= eps:
        return S + eps * np.eye(3)
    lam = np.maximum(lam, eps)
    out = U @ np.diag(lam) @ U.T
    return 0.5 * (out + out.T)

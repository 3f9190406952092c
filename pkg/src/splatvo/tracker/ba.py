"""Sliding-window photometric bundle adjustment (Gauss-Newton with Schur
complement on the inverse-depth block).

Free parameters: per non-gauge keyframe a 8-vector (pose tangent, a, b),
optionally the four shared intrinsics, and one inverse depth per active
point. The two oldest keyframes are held fixed entirely (pose gauge and
brightness gauge). Point depths are eliminated via the Schur complement;
accepted Levenberg-Marquardt steps never increase the Huber energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Intrinsics, Pose
from ..errors import GaugeError
from .residual import (
    OUTLIER_ENERGY,
    huber_energy,
    huber_weight,
    idepth_jacobian,
    pose_jacobian_host,
    pose_jacobian_target,
    prepare_host_points,
    projection_rows,
    warp_residuals,
)
from .types import STATUS_ACTIVE, STATUS_OUTLIER, Keyframe, Window

POSE_BLOCK = 8  # 6 pose + a + b
MIN_OBS = 1


@dataclass
class BAReport:
    energy_trace: list = field(default_factory=list)
    iterations: int = 0
    n_points: int = 0
    n_observations: int = 0
    n_outliers: int = 0
    converged: bool = False


@dataclass
class _Structure:
    """Fixed problem structure for one windowed_ba call."""

    free: list  # window indices of free keyframes
    col_of: dict  # window index -> pose-block column offset
    n_pose: int
    points: list  # (host_widx, point_index, depth_col)
    point_col: dict  # (host_widx, point_index) -> depth col
    obs: list  # (host_widx, target_widx, np.ndarray of point rows into `points`)
    hostdata: dict  # host_widx -> (HostPoints, active idx)
    intrinsics_col: int | None


def _build_structure(window: Window, K: Intrinsics, optimize_intrinsics: bool):
    kfs = window.keyframes
    fixed = set(range(min(2, len(kfs))))
    free = [i for i in range(len(kfs)) if i not in fixed]
    col_of = {w: POSE_BLOCK * i for i, w in enumerate(free)}
    n_pose = POSE_BLOCK * len(free)
    intr_col = None
    if optimize_intrinsics:
        intr_col = n_pose
        n_pose += 4

    hostdata = {}
    points = []
    point_col = {}
    obs = []
    for h, kf in enumerate(kfs):
        idx = np.nonzero(kf.active_mask())[0]
        if idx.size == 0:
            continue
        hostdata[h] = (prepare_host_points(kf, K, 0, idx), idx)

    # observation graph: a point participates once it is seen in >= MIN_OBS
    # other keyframes with acceptable pattern energy at the current state
    seen = {}
    for h, (hp, idx) in hostdata.items():
        host_kf = kfs[h]
        for t, target_kf in enumerate(kfs):
            if t == h:
                continue
            rel = target_kf.pose.inverse() @ host_kf.pose
            s = target_kf.brightness_scale_from(host_kf)
            wr = warp_residuals(
                hp, target_kf.pyramid.level(0), rel, host_kf.idepth[idx],
                s, host_kf.b, target_kf.b,
            )
            ok = wr.point_valid & (wr.energy < OUTLIER_ENERGY)
            rows = np.nonzero(ok)[0]
            if rows.size == 0:
                continue
            obs.append((h, t, rows))
            for r in rows:
                seen.setdefault((h, int(idx[r])), 0)
                seen[(h, int(idx[r]))] += 1

    for (h, pi), count in sorted(seen.items()):
        if count >= MIN_OBS:
            point_col[(h, pi)] = len(points)
            points.append((h, pi, len(points)))

    # drop observation rows whose point did not qualify
    obs2 = []
    for h, t, rows in obs:
        _, idx = hostdata[h]
        keep = np.array([(h, int(idx[r])) in point_col for r in rows], dtype=bool)
        if keep.any():
            obs2.append((h, t, rows[keep]))

    return _Structure(
        free=free, col_of=col_of, n_pose=n_pose, points=points,
        point_col=point_col, obs=obs2, hostdata=hostdata, intrinsics_col=intr_col,
    )


def _intrinsics_rows(K, rays, Xt, gu, gv, gX, rel, idepth_flat):
    """d r / d (fx, fy, cx, cy): projection side plus the host unprojection."""
    z = np.maximum(Xt[:, 2], 1e-9)
    rho = np.maximum(idepth_flat, 1e-12)
    J = np.zeros((Xt.shape[0], 4))
    # target projection side
    J[:, 0] = gu * Xt[:, 0] / z
    J[:, 1] = gv * Xt[:, 1] / z
    J[:, 2] = gu
    J[:, 3] = gv
    # host unprojection side: X_h = ((u-cx)/fx, (v-cy)/fy, 1)/rho
    dxh_dfx = np.zeros_like(rays)
    dxh_dfx[:, 0] = -rays[:, 0] / (K.fx * rho)
    dxh_dfy = np.zeros_like(rays)
    dxh_dfy[:, 1] = -rays[:, 1] / (K.fy * rho)
    dxh_dcx = np.zeros_like(rays)
    dxh_dcx[:, 0] = -1.0 / (K.fx * rho)
    dxh_dcy = np.zeros_like(rays)
    dxh_dcy[:, 1] = -1.0 / (K.fy * rho)
    R = rel.rotation
    J[:, 0] += np.sum(gX * (dxh_dfx @ R.T), axis=1)
    J[:, 1] += np.sum(gX * (dxh_dfy @ R.T), axis=1)
    J[:, 2] += np.sum(gX * (dxh_dcx @ R.T), axis=1)
    J[:, 3] += np.sum(gX * (dxh_dcy @ R.T), axis=1)
    return J


def _assemble(window: Window, K: Intrinsics, st: _Structure):
    """Huber-weighted normal-equation blocks and the current energy."""
    kfs = window.keyframes
    n_p = st.n_pose
    n_d = len(st.points)
    Hpp = np.zeros((n_p, n_p))
    Hpd = np.zeros((n_p, n_d))
    Hdd = np.zeros(n_d)
    gp = np.zeros(n_p)
    gd = np.zeros(n_d)
    energy = 0.0
    n_rows = 0

    for h, t, rows in st.obs:
        hp, idx = st.hostdata[h]
        host_kf, target_kf = kfs[h], kfs[t]
        rel = target_kf.pose.inverse() @ host_kf.pose
        s = target_kf.brightness_scale_from(host_kf)
        idep = host_kf.idepth[idx]
        wr = warp_residuals(
            hp, target_kf.pyramid.level(0), rel, idep, s, host_kf.b, target_kf.b
        )
        sample_rows = (rows[:, None] * 8 + np.arange(8)[None, :]).ravel()
        m = wr.valid[sample_rows]
        sample_rows = sample_rows[m]
        if sample_rows.size == 0:
            continue
        r = wr.r[sample_rows]
        w = huber_weight(r)
        energy += float(huber_energy(r).sum())
        n_rows += r.size

        gX = projection_rows(hp.K, wr.Xt[sample_rows], wr.gu[sample_rows], wr.gv[sample_rows])
        X_w = target_kf.pose.apply(wr.Xt[sample_rows])
        host_int = hp.host_int[sample_rows]
        idepth_flat = np.repeat(idep, 8)[sample_rows]
        rays = hp.rays[sample_rows]

        blocks = []  # (col, J_block)
        if t in st.col_of:
            Jt = np.empty((r.size, POSE_BLOCK))
            Jt[:, :6] = pose_jacobian_target(gX, X_w, target_kf.pose.rotation)
            Jt[:, 6] = -s * (host_int - host_kf.b)
            Jt[:, 7] = -1.0
            blocks.append((st.col_of[t], Jt))
        if h in st.col_of:
            Jh = np.empty((r.size, POSE_BLOCK))
            Jh[:, :6] = pose_jacobian_host(gX, X_w, target_kf.pose.rotation)
            Jh[:, 6] = s * (host_int - host_kf.b)
            Jh[:, 7] = s
            blocks.append((st.col_of[h], Jh))
        if st.intrinsics_col is not None:
            Jk = _intrinsics_rows(
                hp.K, rays, wr.Xt[sample_rows], wr.gu[sample_rows],
                wr.gv[sample_rows], gX, rel, idepth_flat,
            )
            blocks.append((st.intrinsics_col, Jk))

        Jd = idepth_jacobian(gX, rays, idepth_flat, rel.rotation)
        dcols = np.array(
            [st.point_col[(h, int(idx[pr]))] for pr in rows], dtype=np.int64
        )
        dcol_flat = np.repeat(dcols, 8)[m]

        wJd = w * Jd
        np.add.at(Hdd, dcol_flat, wJd * Jd)
        np.add.at(gd, dcol_flat, wJd * r)

        for col_a, Ja in blocks:
            Jw = Ja * w[:, None]
            for col_b, Jb in blocks:
                if col_b < col_a:
                    continue
                Hpp[col_a : col_a + Ja.shape[1], col_b : col_b + Jb.shape[1]] += Jw.T @ Jb
            gp[col_a : col_a + Ja.shape[1]] += Jw.T @ r
            block = Jw * Jd[:, None]
            for j in range(Ja.shape[1]):
                np.add.at(Hpd[col_a + j], dcol_flat, block[:, j])

    # mirror the upper-triangular pose block
    Hpp = np.triu(Hpp) + np.triu(Hpp, 1).T
    return Hpp, Hpd, Hdd, gp, gd, energy, n_rows


def solve_schur(Hpp, Hpd, Hdd, gp, gd, lam: float):
    """Eliminate the diagonal depth block and solve for (pose, depth) steps."""
    n_p = Hpp.shape[0]
    Hpp_d = Hpp + lam * np.diag(np.maximum(np.diag(Hpp), 1e-12))
    Hdd_d = Hdd + lam * np.maximum(Hdd, 1e-12)
    inv_dd = np.where(Hdd_d > 1e-12, 1.0 / np.maximum(Hdd_d, 1e-12), 0.0)
    S = Hpp_d - (Hpd * inv_dd[None, :]) @ Hpd.T
    rhs = -gp + (Hpd * inv_dd[None, :]) @ gd
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as e:
        raise GaugeError("reduced pose system is not positive definite") from e
    dp = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    dd = -inv_dd * (gd + Hpd.T @ dp)
    return dp, dd


def apply_step(window: Window, st: _Structure, K: Intrinsics, dp, dd):
    kfs = window.keyframes
    new_K = K
    for w, col in st.col_of.items():
        kf = kfs[w]
        kf.pose = kf.pose.retract(dp[col : col + 6])
        kf.a += dp[col + 6]
        kf.b += dp[col + 7]
    if st.intrinsics_col is not None:
        c = st.intrinsics_col
        new_K = Intrinsics(
            K.fx + dp[c], K.fy + dp[c + 1], K.cx + dp[c + 2], K.cy + dp[c + 3],
            K.width, K.height,
        )
    for (h, pi, col) in st.points:
        kfs[h].idepth[pi] = max(kfs[h].idepth[pi] + dd[col], 1e-6)
    return new_K


def _snapshot(window: Window):
    kfs = window.keyframes
    poses = [(kf.pose, kf.a, kf.b) for kf in kfs]
    depths = [kf.idepth.copy() for kf in kfs]
    return poses, depths


def _restore(window: Window, snap):
    poses, depths = snap
    for kf, (pose, a, b), dep in zip(window.keyframes, poses, depths):
        kf.pose, kf.a, kf.b = pose, a, b
        kf.idepth = dep.copy()


def windowed_ba(
    window: Window,
    K: Intrinsics,
    iterations: int = 6,
    optimize_intrinsics: bool = False,
) -> BAReport:
    """Run Gauss-Newton/LM over the window; returns the energy trace.

    Raises GaugeError when the reduced pose system is rank deficient
    (insufficient parallax after gauge fixing). Points whose pattern energy
    ends above the outlier threshold are flagged STATUS_OUTLIER.
    """
    if len(window) < 2:
        raise ValueError("window needs at least two keyframes")
    st = _build_structure(window, K, optimize_intrinsics)
    report = BAReport(n_points=len(st.points), n_observations=sum(len(r) for _, _, r in st.obs))
    if len(st.points) == 0 or not st.free:
        report.converged = True
        return report

    lam = 1e-5
    Hpp, Hpd, Hdd, gp, gd, energy, _ = _assemble(window, K, st)
    # undamped rank probe: detect a gauge-deficient reduced system up front
    inv_dd0 = np.where(Hdd > 1e-12, 1.0 / np.maximum(Hdd, 1e-12), 0.0)
    S0 = Hpp - (Hpd * inv_dd0[None, :]) @ Hpd.T
    ev = np.linalg.eigvalsh(0.5 * (S0 + S0.T))
    if ev[-1] <= 0 or ev[0] / ev[-1] < 1e-14:
        raise GaugeError("reduced system rank deficient (insufficient parallax)")

    report.energy_trace.append(energy)
    cur_K = K
    for _ in range(iterations):
        accepted = False
        for _trial in range(6):
            snap = _snapshot(window)
            snap_K = cur_K
            try:
                dp, dd = solve_schur(Hpp, Hpd, Hdd, gp, gd, lam)
            except GaugeError:
                lam *= 10
                continue
            cur_K = apply_step(window, st, cur_K, dp, dd)
            _, _, _, _, _, new_energy, _ = _assemble(window, cur_K, st)
            if new_energy < energy:
                energy = new_energy
                lam = max(lam / 3, 1e-8)
                accepted = True
                break
            _restore(window, snap)
            cur_K = snap_K
            lam *= 5
        report.iterations += 1
        report.energy_trace.append(energy)
        if not accepted:
            break
        Hpp, Hpd, Hdd, gp, gd, energy, _ = _assemble(window, cur_K, st)

    # outlier marking: mean pattern energy across this point's observations
    point_energy = {}
    point_count = {}
    kfs = window.keyframes
    for h, t, rows in st.obs:
        hp, idx = st.hostdata[h]
        host_kf, target_kf = kfs[h], kfs[t]
        rel = target_kf.pose.inverse() @ host_kf.pose
        s = target_kf.brightness_scale_from(host_kf)
        wr = warp_residuals(
            hp, target_kf.pyramid.level(0), rel, host_kf.idepth[idx],
            s, host_kf.b, target_kf.b,
        )
        for pr in rows:
            key = (h, int(idx[pr]))
            point_energy[key] = point_energy.get(key, 0.0) + float(wr.energy[pr])
            point_count[key] = point_count.get(key, 0) + 1
    for (h, pi), tot in point_energy.items():
        if tot / point_count[(h, pi)] > OUTLIER_ENERGY:
            kfs[h].status[pi] = STATUS_OUTLIER
            report.n_outliers += 1

    report.converged = True
    return report

"""EM-coupled SLAM orchestration.

Per frame: direct alignment against the last keyframe, keyframe decision,
and for new keyframes the M-step (splat initialization, rendered-depth
fusion, windowed bundle adjustment) followed by the E-step (scene
optimization over a recency-prioritized keyframe batch) and densification
scheduling.

Two run modes: deterministic-sequential strictly alternates M- and E-steps
on one thread (bitwise reproducible for a fixed seed); realtime-decoupled
runs the mapper (initialization + E-step) on a second thread fed by
immutable keyframe snapshots, with rendered-depth snapshots flowing back.
"""

from __future__ import annotations

import dataclasses
import logging
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..core import Intrinsics, Pose, build_pyramid
from ..errors import TexturelessInput, TrackingLost
from ..splat_init import initialize_splats_for_keyframe
from ..splats import (
    EStepFrame,
    GaussianScene,
    densify_and_prune,
    optimize_e_step,
    rasterize,
    scene_extent,
)
from ..tracker import (
    STATUS_ACTIVE,
    Window,
    keyframe_decision,
    make_keyframe,
    robust_align,
    search_idepth,
    select_pixels,
    windowed_ba,
)
from .config import MODE_REALTIME, MODE_SEQUENTIAL, PipelineConfig

log = logging.getLogger(__name__)


@dataclass
class RunReport:
    trajectory: list = field(default_factory=list)  # (timestamp, Pose) per frame
    scene: GaussianScene = field(default_factory=GaussianScene)
    keyframe_stats: list = field(default_factory=list)
    timings_ms: dict = field(default_factory=dict)
    log_lines: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    tracking_lost: bool = False
    coverage_incomplete: bool = False
    frames_processed: int = 0
    published_versions: list = field(default_factory=list)
    consumed_versions: list = field(default_factory=list)

    def timing_summary(self) -> dict:
        n = max(self.frames_processed, 1)
        return {k: v / n for k, v in self.timings_ms.items()}


class _Stopwatch:
    def __init__(self, report, key):
        self.report = report
        self.key = key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        dt = (time.perf_counter() - self.t0) * 1e3
        self.report.timings_ms[self.key] = self.report.timings_ms.get(self.key, 0.0) + dt


def select_e_step_batch(window_kfs, all_kfs, batch_size, rng, trained):
    """Recency-prioritized batch: the window keyframes, topped up with
    uniformly sampled historical ones once the window is trained."""
    if len(all_kfs) <= batch_size:
        return list(all_kfs)
    recent = list(window_kfs)
    if not trained:
        return recent[-batch_size:]
    historical = [kf for kf in all_kfs if kf.kf_id not in {k.kf_id for k in recent}]
    extra = batch_size - len(recent)
    if extra <= 0 or not historical:
        return recent[-batch_size:]
    picks = rng.choice(len(historical), size=min(extra, len(historical)), replace=False)
    return recent + [historical[int(i)] for i in sorted(picks)]


def _estep_frame(kf, K, with_depth):
    active = kf.active_mask()
    px = kf.px[active]
    depths = 1.0 / kf.idepth[active]
    return EStepFrame(
        pose=kf.pose,
        K=K,
        image=kf.color,
        depth_pixels=px if with_depth else None,
        depth_values=depths if with_depth else None,
        kf_id=kf.kf_id,
    )


class SlamEngine:
    """Single-threaded core shared by both run modes."""

    def __init__(self, config: PipelineConfig, K: Intrinsics, report: RunReport):
        self.cfg = config
        self.K = K
        self.report = report
        self.window = Window(config.tracker.window_size)
        self.all_keyframes = []
        self.scene = GaussianScene()
        self.rng = np.random.default_rng(config.seed)
        self.next_kf_id = 0
        self.prev_poses = []  # frame poses for constant-velocity prediction
        self.estep_counter = 0
        self.min_recent_loss = None
        self.last_recent_loss = None
        self.scene_version = 0

    # ---------------- tracking ----------------

    def predict_pose(self):
        if len(self.prev_poses) >= 2:
            prev, cur = self.prev_poses[-2], self.prev_poses[-1]
            return (cur @ prev.inverse()) @ cur
        if self.prev_poses:
            return self.prev_poses[-1]
        return Pose.identity()

    def track(self, frame):
        t = self.cfg.tracker
        pyr = build_pyramid(frame.image.to_intensity().data, t.pyramid_levels)
        pose, a, b, rep = robust_align(
            self.window.latest(),
            pyr,
            frame.exposure,
            self.K,
            self.predict_pose(),
            max_iterations=t.align_iterations,
            min_inlier_fraction=t.min_inlier_fraction,
        )
        return pose, a, b, rep

    def make_new_keyframe(self, frame, pose, a, b):
        t = self.cfg.tracker
        kf = make_keyframe(
            self.next_kf_id, frame, pose, num_levels=t.pyramid_levels, a=a, b=b
        )
        self.next_kf_id += 1
        px = select_pixels(
            kf.image0, kf.grad0, t.target_points, cell=t.select_cell,
            margin=t.select_margin,
        )
        kf.px = px
        kf.idepth = np.zeros(len(px))
        kf.idepth_var = np.full(len(px), 1e4)
        kf.status = np.zeros(len(px), dtype=np.int8)

        ref = self.window.latest()
        ref_active = ref.idepth[ref.active_mask()]
        scale = float(np.median(ref_active)) if ref_active.size else 1.0
        res = search_idepth(
            kf, ref, self.K, np.arange(len(px)),
            idepth_range=(t.idepth_min, t.idepth_max),
            samples=t.idepth_samples, range_scale=scale,
        )
        kf.idepth = np.where(res.valid, res.idepth, 0.0)
        kf.idepth_var = res.variance
        kf.status = np.where(res.valid, STATUS_ACTIVE, 0).astype(np.int8)
        return kf

    # ---------------- M-step ----------------

    def fuse_window_depths(self):
        """Blend each window keyframe's BA inverse depths with its cached
        splat-map render, behind the relative-disagreement gate."""
        if not self.cfg.tracker.fuse_enabled:
            return
        for kf in self.window:
            if kf.rendered_depth is None:
                continue
            active = np.nonzero(kf.active_mask())[0]
            if active.size == 0:
                continue
            px = kf.px[active]
            rendered = kf.rendered_depth[px[:, 1], px[:, 0]]
            alpha = kf.rendered_alpha[px[:, 1], px[:, 0]]
            from ..tracker import fuse_depth

            kf.idepth[active] = fuse_depth(
                kf.idepth[active],
                kf.idepth_var[active],
                rendered,
                alpha > 0.5,
                gate=self.cfg.tracker.fuse_gate,
            )

    def render_depth_for(self, kf):
        if len(self.scene) == 0:
            return
        render = rasterize(self.scene, kf.pose, self.K)
        kf.rendered_depth = render.depth
        kf.rendered_alpha = render.alpha

    def m_step(self, kf):
        init_report = initialize_splats_for_keyframe(
            kf, self.window, self.scene, self.K,
            variant=self.cfg.init.variant,
            preset=self.cfg.init.opacity_preset,
            use_sqrt_scales=self.cfg.init.sqrt_scales,
            patch_radius=self.cfg.init.patch_radius,
            const_scale_px=self.cfg.init.const_scale_px,
            knn_k=self.cfg.init.knn_k,
        )
        if self.cfg.tracker.fuse_enabled:
            self.render_depth_for(kf)
        self.fuse_window_depths()
        ba_report = windowed_ba(
            self.window, self.K,
            iterations=self.cfg.tracker.ba_iterations,
            optimize_intrinsics=self.cfg.tracker.optimize_intrinsics,
        )
        for w in self.window:
            w.version += 1
            self.report.published_versions.append((w.kf_id, w.version))
        return init_report, ba_report

    # ---------------- E-step ----------------

    def trained(self):
        if self.min_recent_loss is None or self.last_recent_loss is None:
            return False
        return self.last_recent_loss < self.cfg.splats.trained_factor * self.min_recent_loss

    def e_step(self, iterations=None, mode="batch"):
        s = self.cfg.splats
        if len(self.scene) == 0:
            return None
        batch_kfs = select_e_step_batch(
            self.window.keyframes, self.all_keyframes, s.batch_size,
            self.rng, self.trained(),
        )
        frames = [_estep_frame(kf, self.K, s.depth_term) for kf in batch_kfs]
        self.report.consumed_versions.extend((kf.kf_id, kf.version) for kf in batch_kfs)
        report = optimize_e_step(
            self.scene, frames,
            iterations=iterations if iterations is not None else s.e_iters,
            lam=s.lam, lam_d=s.lam_d, lam_n=s.lam_n,
            mode=mode,
            rng=self.rng if mode == "cycle" else None,
            keep_renders=True,
        )
        # cache renders for the next fusion round
        for kf in batch_kfs:
            render = report.last_renders.get(kf.kf_id)
            if render is not None:
                kf.rendered_depth = render.depth
                kf.rendered_alpha = render.alpha
        # window training state for historical sampling
        recent_ids = {kf.kf_id for kf in self.window}
        recent_losses = [
            v for k, v in report.per_frame_loss.items() if k in recent_ids
        ]
        if recent_losses:
            mean_loss = float(np.mean(recent_losses))
            self.last_recent_loss = mean_loss
            if self.min_recent_loss is None or mean_loss < self.min_recent_loss:
                self.min_recent_loss = mean_loss

        self.estep_counter += report.iterations
        if (
            self.estep_counter >= s.densify_interval
            and len(self.scene) < s.max_splats
        ):
            self.estep_counter = 0
            extent = scene_extent(frames)
            densify_and_prune(
                self.scene, extent,
                grad_threshold=s.densify_grad_threshold,
                min_iters=s.densify_min_iters,
                scale_fraction=s.densify_scale_fraction,
                prune_opacity=s.prune_opacity,
                prune_footprint=s.prune_footprint,
                view=(self.window.latest().pose, self.K),
                rng=self.rng,
            )
        self.scene_version += 1
        return report


def _bootstrap(engine: SlamEngine, frame0, frame1):
    """Two-frame initialization: align with flat depth, epipolar-search the
    inverse depths, renormalize the gauge to median inverse depth 1, and
    polish depths with fixed-pose bundle adjustment."""
    cfg = engine.cfg.tracker
    kf0 = make_keyframe(0, frame0, Pose.identity(), num_levels=cfg.pyramid_levels)
    engine.next_kf_id = 1
    px = select_pixels(
        kf0.image0, kf0.grad0, cfg.target_points, cell=cfg.select_cell,
        margin=cfg.select_margin,
    )
    kf0.px = px
    kf0.idepth = np.ones(len(px))
    kf0.idepth_var = np.full(len(px), 1.0)
    kf0.status = np.full(len(px), STATUS_ACTIVE, dtype=np.int8)

    pyr1 = build_pyramid(frame1.image.to_intensity().data, cfg.pyramid_levels)
    pose1, a1, b1, _ = robust_align(
        kf0, pyr1, frame1.exposure, engine.K, Pose.identity(),
        max_iterations=cfg.align_iterations,
        min_inlier_fraction=cfg.min_inlier_fraction,
    )
    kf1 = make_keyframe(1, frame1, pose1, num_levels=cfg.pyramid_levels, a=a1, b=b1)
    engine.next_kf_id = 2

    for _round in range(2):
        res = search_idepth(
            kf0, kf1, engine.K, np.arange(len(px)),
            idepth_range=(cfg.idepth_min, cfg.idepth_max),
            samples=cfg.idepth_samples,
        )
        valid = res.valid
        if valid.sum() < 8:
            raise TrackingLost("bootstrap found too few triangulated points")
        kf0.idepth = np.where(valid, res.idepth, 0.0)
        kf0.idepth_var = res.variance
        kf0.status = np.where(valid, STATUS_ACTIVE, 0).astype(np.int8)
        # gauge: median inverse depth of the bootstrap points is 1
        med = float(np.median(kf0.idepth[valid]))
        kf0.idepth = np.where(valid, kf0.idepth / med, 0.0)
        t_scaled = kf1.pose.translation * med
        kf1.pose = Pose(kf1.pose.rotation, t_scaled)
        pose1, a1, b1, _ = robust_align(
            kf0, pyr1, frame1.exposure, engine.K, kf1.pose,
            max_iterations=cfg.align_iterations,
            min_inlier_fraction=cfg.min_inlier_fraction,
        )
        kf1.pose, kf1.a, kf1.b = pose1, a1, b1

    # points for the second keyframe from the reverse search
    px1 = select_pixels(
        kf1.image0, kf1.grad0, cfg.target_points, cell=cfg.select_cell,
        margin=cfg.select_margin,
    )
    kf1.px = px1
    res1 = search_idepth(kf1, kf0, engine.K, np.arange(len(px1)),
                         idepth_range=(cfg.idepth_min, cfg.idepth_max),
                         samples=cfg.idepth_samples)
    kf1.idepth = np.where(res1.valid, res1.idepth, 0.0)
    kf1.idepth_var = res1.variance
    kf1.status = np.where(res1.valid, STATUS_ACTIVE, 0).astype(np.int8)

    engine.window.insert(kf0)
    engine.window.insert(kf1)
    engine.all_keyframes.extend([kf0, kf1])
    # depth-only polish at fixed poses (both keyframes are the gauge)
    windowed_ba(engine.window, engine.K, iterations=cfg.ba_iterations)
    return kf0, kf1


def _log_frame(report, idx, ts, pose, energy, is_kf, timings):
    from scipy.spatial.transform import Rotation

    q = Rotation.from_matrix(pose.rotation).as_quat()
    t = pose.translation
    line = (
        f"{idx} {ts:.6f} "
        + " ".join(f"{v:.9g}" for v in (*t, *q))
        + f" {energy:.6g} {int(is_kf)} "
        + " ".join(f"{timings.get(k, 0.0):.2f}" for k in ("track", "m_step", "init", "e_step"))
    )
    report.log_lines.append(line)


def run_slam(config: PipelineConfig, frames, K: Intrinsics) -> RunReport:
    """Run the full system over a frame sequence; returns the RunReport.

    Tracking failure terminates the run with a partial report and the
    tracking_lost flag; structureless input degrades with warnings and the
    coverage_incomplete flag instead of crashing.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if config.mode == MODE_REALTIME:
        return _run_realtime(config, frames, K)
    return _run_sequential(config, frames, K)


def _run_sequential(config: PipelineConfig, frames, K: Intrinsics) -> RunReport:
    report = RunReport()
    engine = SlamEngine(config, K, report)

    try:
        with _Stopwatch(report, "m_step"):
            kf0, kf1 = _bootstrap(engine, frames[0], frames[1])
    except TexturelessInput as e:
        report.warnings.append(f"textureless input at bootstrap: {e}")
        report.coverage_incomplete = True
        report.tracking_lost = True
        for fr in frames[:2]:
            report.trajectory.append((fr.timestamp, Pose.identity()))
        report.frames_processed = 2
        return report
    except TrackingLost as e:
        report.warnings.append(f"bootstrap failed: {e}")
        report.tracking_lost = True
        for fr in frames[:2]:
            report.trajectory.append((fr.timestamp, Pose.identity()))
        report.frames_processed = 2
        return report

    report.trajectory.append((frames[0].timestamp, kf0.pose))
    report.trajectory.append((frames[1].timestamp, kf1.pose))
    engine.prev_poses = [kf0.pose, kf1.pose]
    report.frames_processed = 2

    with _Stopwatch(report, "init"):
        for kf in (kf0, kf1):
            initialize_splats_for_keyframe(
                kf, engine.window, engine.scene, K,
                variant=config.init.variant,
                preset=config.init.opacity_preset,
                use_sqrt_scales=config.init.sqrt_scales,
                patch_radius=config.init.patch_radius,
                const_scale_px=config.init.const_scale_px,
                knn_k=config.init.knn_k,
            )
    with _Stopwatch(report, "e_step"):
        engine.e_step()

    for idx in range(2, len(frames)):
        frame = frames[idx]
        timings = {}
        try:
            t0 = time.perf_counter()
            pose, a, b, track_rep = engine.track(frame)
            timings["track"] = (time.perf_counter() - t0) * 1e3
            report.timings_ms["track"] = report.timings_ms.get("track", 0.0) + timings["track"]
        except TrackingLost as e:
            report.warnings.append(f"tracking lost at frame {idx}: {e}")
            report.tracking_lost = True
            break

        report.trajectory.append((frame.timestamp, pose))
        engine.prev_poses.append(pose)
        report.frames_processed = idx + 1

        score = keyframe_decision(
            engine.window.latest(), pose, a, frame.exposure, K,
            t_flow=config.tracker.kf_flow_threshold,
            t_flow_t=config.tracker.kf_flow_t_threshold,
            t_brightness=config.tracker.kf_brightness_threshold,
        )
        is_kf = score.decision
        if is_kf:
            try:
                t0 = time.perf_counter()
                kf = engine.make_new_keyframe(frame, pose, a, b)
                timings["init"] = (time.perf_counter() - t0) * 1e3
                report.timings_ms["init"] = report.timings_ms.get("init", 0.0) + timings["init"]
            except TexturelessInput as e:
                report.warnings.append(f"textureless keyframe at frame {idx}: {e}")
                report.coverage_incomplete = True
                is_kf = False
            if is_kf:
                engine.window.insert(kf)
                engine.all_keyframes.append(kf)
                t0 = time.perf_counter()
                init_rep, ba_rep = engine.m_step(kf)
                timings["m_step"] = (time.perf_counter() - t0) * 1e3
                report.timings_ms["m_step"] = report.timings_ms.get("m_step", 0.0) + timings["m_step"]
                # alignment references the refined keyframe pose afterwards
                t0 = time.perf_counter()
                e_rep = engine.e_step()
                timings["e_step"] = (time.perf_counter() - t0) * 1e3
                report.timings_ms["e_step"] = report.timings_ms.get("e_step", 0.0) + timings["e_step"]
                report.keyframe_stats.append(
                    {
                        "kf_id": kf.kf_id,
                        "frame": idx,
                        "n_points": int(kf.active_mask().sum()),
                        "init_added": init_rep.added,
                        "init_fallback_rate": init_rep.fallback_rate,
                        "ba_energy": ba_rep.energy_trace[-1] if ba_rep.energy_trace else 0.0,
                        "e_loss": e_rep.loss_trace[-1] if e_rep is not None and e_rep.loss_trace else 0.0,
                        "n_splats": len(engine.scene),
                    }
                )
        _log_frame(report, idx, frame.timestamp, pose, track_rep.mean_energy, is_kf, timings)

    report.scene = engine.scene
    if report.coverage_incomplete and not report.warnings:
        report.warnings.append("coverage incomplete")
    return report


# ---------------- realtime-decoupled mode ----------------


@dataclass(frozen=True)
class KeyframeSnapshot:
    kf_id: int
    version: int
    pose: Pose
    a: float
    b: float
    exposure: float
    timestamp: float
    pyramid: object
    color: np.ndarray
    grad0: np.ndarray
    px: np.ndarray
    idepth: np.ndarray
    idepth_var: np.ndarray
    status: np.ndarray


def _snapshot_of(kf):
    return KeyframeSnapshot(
        kf_id=kf.kf_id, version=kf.version, pose=kf.pose, a=kf.a, b=kf.b,
        exposure=kf.exposure, timestamp=kf.timestamp, pyramid=kf.pyramid,
        color=kf.color, grad0=kf.grad0, px=kf.px.copy(),
        idepth=kf.idepth.copy(), idepth_var=kf.idepth_var.copy(),
        status=kf.status.copy(),
    )


def _keyframe_from_snapshot(snap):
    from ..tracker.types import Keyframe

    return Keyframe(
        kf_id=snap.kf_id, timestamp=snap.timestamp, pyramid=snap.pyramid,
        color=snap.color, grad0=snap.grad0, pose=snap.pose, a=snap.a, b=snap.b,
        exposure=snap.exposure, px=snap.px, idepth=snap.idepth,
        idepth_var=snap.idepth_var, status=snap.status, version=snap.version,
    )


def _run_realtime(config: PipelineConfig, frames, K: Intrinsics) -> RunReport:
    """Front-end thread (tracking + M-step) and mapper thread (init +
    E-step + densify) exchanging immutable snapshots."""
    report = RunReport()
    engine = SlamEngine(config, K, report)

    kf_queue: queue.Queue = queue.Queue()
    depth_lock = threading.Lock()
    depth_snapshots: dict = {}
    stop = threading.Event()
    mapper_error: list = []

    mapper_scene = GaussianScene()
    mapper_window = Window(config.tracker.window_size)
    mapper_all = []
    mapper_rng = np.random.default_rng(config.seed + 1)
    estep_counter = [0]

    def mapper():
        s = config.splats
        try:
            while not stop.is_set() or not kf_queue.empty():
                try:
                    snap = kf_queue.get(timeout=0.02)
                except queue.Empty:
                    snap = None
                if snap is not None:
                    kf = _keyframe_from_snapshot(snap)
                    mapper_window.insert(kf)
                    mapper_all.append(kf)
                    initialize_splats_for_keyframe(
                        kf, mapper_window, mapper_scene, K,
                        variant=config.init.variant,
                        preset=config.init.opacity_preset,
                        use_sqrt_scales=config.init.sqrt_scales,
                        patch_radius=config.init.patch_radius,
                        const_scale_px=config.init.const_scale_px,
                        knn_k=config.init.knn_k,
                    )
                if len(mapper_scene) == 0 or not mapper_all:
                    continue
                batch = select_e_step_batch(
                    mapper_window.keyframes, mapper_all, s.batch_size, mapper_rng, True
                )
                efr = [_estep_frame(kf, K, s.depth_term) for kf in batch]
                rep = optimize_e_step(
                    mapper_scene, efr, iterations=max(s.e_iters // 3, 5),
                    lam=s.lam, lam_d=s.lam_d, lam_n=s.lam_n,
                    mode="cycle", rng=mapper_rng, keep_renders=True,
                )
                with depth_lock:
                    for kf in batch:
                        render = rep.last_renders.get(kf.kf_id)
                        if render is not None:
                            depth_snapshots[kf.kf_id] = (render.depth, render.alpha)
                estep_counter[0] += rep.iterations
                if estep_counter[0] >= s.densify_interval:
                    estep_counter[0] = 0
                    densify_and_prune(
                        mapper_scene, scene_extent(efr),
                        grad_threshold=s.densify_grad_threshold,
                        min_iters=s.densify_min_iters,
                        scale_fraction=s.densify_scale_fraction,
                        prune_opacity=s.prune_opacity,
                        prune_footprint=s.prune_footprint,
                        view=(batch[-1].pose, K),
                        rng=mapper_rng,
                    )
        except Exception as e:  # surfaced to the caller after join
            mapper_error.append(e)

    thread = threading.Thread(target=mapper, name="mapper", daemon=True)

    try:
        kf0, kf1 = _bootstrap(engine, frames[0], frames[1])
    except (TexturelessInput, TrackingLost) as e:
        report.warnings.append(f"bootstrap failed: {e}")
        report.tracking_lost = True
        report.coverage_incomplete = isinstance(e, TexturelessInput)
        for fr in frames[:2]:
            report.trajectory.append((fr.timestamp, Pose.identity()))
        report.frames_processed = 2
        return report

    report.trajectory.extend(
        [(frames[0].timestamp, kf0.pose), (frames[1].timestamp, kf1.pose)]
    )
    engine.prev_poses = [kf0.pose, kf1.pose]
    report.frames_processed = 2
    thread.start()
    kf_queue.put(_snapshot_of(kf0))
    kf_queue.put(_snapshot_of(kf1))

    try:
        for idx in range(2, len(frames)):
            frame = frames[idx]
            try:
                pose, a, b, _ = engine.track(frame)
            except TrackingLost as e:
                report.warnings.append(f"tracking lost at frame {idx}: {e}")
                report.tracking_lost = True
                break
            report.trajectory.append((frame.timestamp, pose))
            engine.prev_poses.append(pose)
            report.frames_processed = idx + 1
            score = keyframe_decision(
                engine.window.latest(), pose, a, frame.exposure, K,
                t_flow=config.tracker.kf_flow_threshold,
                t_flow_t=config.tracker.kf_flow_t_threshold,
                t_brightness=config.tracker.kf_brightness_threshold,
            )
            if not score.decision:
                continue
            try:
                kf = engine.make_new_keyframe(frame, pose, a, b)
            except TexturelessInput as e:
                report.warnings.append(f"textureless keyframe at frame {idx}: {e}")
                report.coverage_incomplete = True
                continue
            engine.window.insert(kf)
            engine.all_keyframes.append(kf)
            # fuse against the latest mapper depth snapshots (non-blocking)
            if config.tracker.fuse_enabled:
                with depth_lock:
                    for w in engine.window:
                        snap = depth_snapshots.get(w.kf_id)
                        if snap is not None:
                            w.rendered_depth, w.rendered_alpha = snap
                engine.fuse_window_depths()
            windowed_ba(
                engine.window, K,
                iterations=config.tracker.ba_iterations,
                optimize_intrinsics=config.tracker.optimize_intrinsics,
            )
            for w in engine.window:
                w.version += 1
            kf_queue.put(_snapshot_of(kf))
    finally:
        stop.set()
        thread.join(timeout=60.0)

    if mapper_error:
        raise mapper_error[0]
    report.scene = mapper_scene
    return report

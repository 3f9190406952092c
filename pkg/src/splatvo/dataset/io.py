"""On-disk sequence formats.

- Trajectories: TUM text format, one line per pose,
  "timestamp tx ty tz qx qy qz qw" with 9 significant digits.
- times.txt: "index timestamp exposure", whitespace separated.
- Images: PNG and PPM/PGM only. Depth images are 16-bit PNG scaled by
  DEPTH_SCALE (TUM convention, 5000 units per meter).
- calib.txt: "fx fy cx cy width height".
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage
from scipy.spatial.transform import Rotation

from ..core import Image, Intrinsics, Pose
from ..errors import DimensionMismatch, IoError, ParseError
from .trajectory import FrameRecord

DEPTH_SCALE = 5000.0  # 16-bit depth PNG units per meter
DEFAULT_FPS = 30.0
_IMAGE_EXTS = (".png", ".ppm", ".pgm")


def write_trajectory(path, trajectory) -> None:
    """Write a list of (timestamp, Pose) in TUM format, 9 significant digits."""
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, pose in trajectory:
            q = Rotation.from_matrix(pose.rotation).as_quat()  # (qx, qy, qz, qw)
            t = pose.translation
            fields = " ".join(f"{v:.9g}" for v in (*t, *q))
            f.write(f"{ts:.9f} {fields}\n")


def read_trajectory(path) -> list:
    """Inverse of write_trajectory (up to quaternion sign)."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 8:
                raise ParseError(f"expected 8 fields, got {len(parts)}", line=lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError as e:
                raise ParseError(str(e), line=lineno) from e
            ts, tx, ty, tz, qx, qy, qz, qw = vals
            norm = np.linalg.norm([qx, qy, qz, qw])
            if norm < 1e-12:
                raise ParseError("zero quaternion", line=lineno)
            R = Rotation.from_quat(np.array([qx, qy, qz, qw]) / norm).as_matrix()
            out.append((ts, Pose(R, np.array([tx, ty, tz]))))
    return out


def write_times(path, rows) -> None:
    """rows: iterable of (index, timestamp, exposure)."""
    with open(path, "w") as f:
        for idx, ts, exposure in rows:
            f.write(f"{idx} {ts:.9f} {exposure:.9g}\n")


def read_times(path) -> list:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", line=lineno)
            try:
                out.append((int(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError as e:
                raise ParseError(str(e), line=lineno) from e
    return out


def write_calib(path, K: Intrinsics) -> None:
    with open(path, "w") as f:
        f.write(f"{K.fx:.9g} {K.fy:.9g} {K.cx:.9g} {K.cy:.9g} {K.width} {K.height}\n")


def read_calib(path) -> Intrinsics:
    with open(path) as f:
        parts = f.read().split()
    if len(parts) != 6:
        raise ParseError(f"calib needs 6 fields, got {len(parts)}", line=1)
    fx, fy, cx, cy = (float(p) for p in parts[:4])
    return Intrinsics(fx, fy, cx, cy, int(parts[4]), int(parts[5]))


def save_image(path, img: Image) -> None:
    data = np.clip(np.round(img.data * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(path)


def save_depth(path, depth: Image) -> None:
    data = np.clip(np.round(depth.data * DEPTH_SCALE), 0, 65535).astype(np.uint16)
    PILImage.fromarray(data).save(path)


def load_image(path) -> Image:
    """Load a PNG/PPM/PGM as floats in [0, 1] (8-bit: /255, 16-bit: /65535)."""
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif im.mode in ("L", "RGB"):
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as e:
        raise IoError(f"cannot read image {path}: {e}") from e
    return Image(arr)


def load_depth(path) -> Image:
    try:
        with PILImage.open(path) as im:
            im.load()
            arr = np.asarray(im, dtype=np.float64) / DEPTH_SCALE
    except (OSError, ValueError) as e:
        raise IoError(f"cannot read depth {path}: {e}") from e
    return Image(arr)


def _numbered_images(directory):
    try:
        names = sorted(
            n for n in os.listdir(directory) if n.lower().endswith(_IMAGE_EXTS)
        )
    except OSError as e:
        raise IoError(f"cannot list {directory}: {e}") from e
    return names


def load_image_sequence(directory) -> list:
    """Load frames from a directory of numbered images (GT fields absent).

    Accepts either a flat directory of images or one with an rgb/ subdirectory.
    An optional times.txt provides per-frame timestamp and exposure; without
    it, timestamps default to k / 30 fps and exposure to 1.0.
    """
    rgb_dir = directory
    sub = os.path.join(directory, "rgb")
    if os.path.isdir(sub):
        rgb_dir = sub
    names = _numbered_images(rgb_dir)
    if not names:
        raise IoError(f"no images found in {rgb_dir}")

    times_path = os.path.join(directory, "times.txt")
    times = read_times(times_path) if os.path.isfile(times_path) else None

    frames = []
    shape = None
    for k, name in enumerate(names):
        img = load_image(os.path.join(rgb_dir, name))
        if shape is None:
            shape = img.data.shape
        elif img.data.shape != shape:
            raise DimensionMismatch(
                f"{name}: shape {img.data.shape} != first frame {shape}"
            )
        if times is not None and k < len(times):
            _, ts, exposure = times[k]
        else:
            ts, exposure = k / DEFAULT_FPS, 1.0
        frames.append(FrameRecord(timestamp=ts, image=img, exposure=exposure))
    return frames


def write_dataset(directory, frames, K: Intrinsics, gt: bool = True) -> None:
    """Write rgb/, optional depth/ + groundtruth.txt, times.txt, calib.txt."""
    os.makedirs(os.path.join(directory, "rgb"), exist_ok=True)
    if gt:
        os.makedirs(os.path.join(directory, "depth"), exist_ok=True)
    rows = []
    trajectory = []
    for k, fr in enumerate(frames):
        save_image(os.path.join(directory, "rgb", f"{k:06d}.png"), fr.image)
        rows.append((k, fr.timestamp, fr.exposure))
        if gt:
            if fr.gt_depth is None or fr.gt_pose is None:
                raise ValueError("frame lacks ground truth")
            save_depth(os.path.join(directory, "depth", f"{k:06d}.png"), fr.gt_depth)
            trajectory.append((fr.timestamp, fr.gt_pose))
    write_times(os.path.join(directory, "times.txt"), rows)
    write_calib(os.path.join(directory, "calib.txt"), K)
    if gt:
        write_trajectory(os.path.join(directory, "groundtruth.txt"), trajectory)


def load_dataset(directory):
    """Load a gen-produced dataset; returns (frames, K).

    Ground-truth pose/depth are attached when groundtruth.txt and depth/
    exist.
    """
    frames = load_image_sequence(directory)
    K = read_calib(os.path.join(directory, "calib.txt"))
    gt_path = os.path.join(directory, "groundtruth.txt")
    depth_dir = os.path.join(directory, "depth")
    if os.path.isfile(gt_path):
        gt = read_trajectory(gt_path)
        depth_names = _numbered_images(depth_dir) if os.path.isdir(depth_dir) else []
        out = []
        for k, fr in enumerate(frames):
            pose = gt[k][1] if k < len(gt) else None
            depth = (
                load_depth(os.path.join(depth_dir, depth_names[k]))
                if k < len(depth_names)
                else None
            )
            out.append(
                FrameRecord(
                    timestamp=fr.timestamp,
                    image=fr.image,
                    exposure=fr.exposure,
                    gt_pose=pose,
                    gt_depth=depth,
                )
            )
        frames = out
    return frames, K

"""Binary splat checkpoint format.

Layout (little-endian): magic "GSO2DGS1", uint64 splat count, then per splat
15 float32 records: mean[3], t_u[3], t_v[3], s_u, s_v, opacity, rgb[3].
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import IoError, ParseError
from .model import GaussianScene

MAGIC = b"GSO2DGS1"
_FLOATS_PER_SPLAT = 15


def write_scene(path, scene: GaussianScene) -> None:
    n = len(scene)
    rec = np.empty((n, _FLOATS_PER_SPLAT), dtype="<f4")
    rec[:, 0:3] = scene.means
    rec[:, 3:6] = scene.tan_u
    rec[:, 6:9] = scene.tan_v
    rec[:, 9] = scene.scales[:, 0]
    rec[:, 10] = scene.scales[:, 1]
    rec[:, 11] = scene.opacity
    rec[:, 12:15] = scene.colors
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", n))
        f.write(rec.tobytes())


def read_scene(path) -> GaussianScene:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoError(f"cannot read scene {path}: {e}") from e
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError(f"bad magic in {path}")
    (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
    expected = len(MAGIC) + 8 + n * _FLOATS_PER_SPLAT * 4
    if len(blob) != expected:
        raise ParseError(f"scene file truncated: {len(blob)} != {expected} bytes")
    rec = np.frombuffer(
        blob, dtype="<f4", count=n * _FLOATS_PER_SPLAT, offset=len(MAGIC) + 8
    ).reshape(n, _FLOATS_PER_SPLAT).astype(np.float64)
    scene = GaussianScene()
    if n:
        scene.add(
            rec[:, 0:3], rec[:, 3:6], rec[:, 6:9], rec[:, 9:11], rec[:, 11], rec[:, 12:15]
        )
    return scene

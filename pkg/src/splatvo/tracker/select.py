"""Grid-based high-gradient pixel selection."""

from __future__ import annotations

import numpy as np

from ..errors import TexturelessInput

GRAD_MARGIN = 7.0 / 255.0  # over the cell median
CELL = 8
BORDER = 3  # keep the residual pattern and bilinear support inside the image
MIN_POINTS = 8


def select_pixels(
    intensity: np.ndarray,
    grad: np.ndarray,
    target: int,
    cell: int = CELL,
    margin: float = GRAD_MARGIN,
) -> np.ndarray:
    """Pick at most `target` spatially spread high-gradient pixels.

    The image is partitioned into `cell` x `cell` blocks; each block
    contributes its gradient-magnitude argmax if that exceeds the block
    median plus `margin`. Fewer than MIN_POINTS hits raises TexturelessInput
    (the degradation path for structureless input).
    """
    h, w = intensity.shape
    mag = np.linalg.norm(grad, axis=-1)
    picks = []
    scores = []
    for y0 in range(0, h - cell + 1, cell):
        for x0 in range(0, w - cell + 1, cell):
            block = mag[y0 : y0 + cell, x0 : x0 + cell]
            thresh = float(np.median(block)) + margin
            idx = int(np.argmax(block))
            by, bx = divmod(idx, cell)
            if block[by, bx] <= thresh:
                continue
            px, py = x0 + bx, y0 + by
            if not (BORDER <= px < w - BORDER and BORDER <= py < h - BORDER):
                continue
            picks.append((px, py))
            scores.append(block[by, bx])
    if len(picks) < MIN_POINTS:
        raise TexturelessInput(f"only {len(picks)} high-gradient pixels found")
    picks = np.asarray(picks, dtype=np.int64)
    scores = np.asarray(scores)
    if len(picks) > target:
        order = np.argsort(-scores, kind="stable")[:target]
        picks = picks[np.sort(order)]
    return picks

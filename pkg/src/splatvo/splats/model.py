"""2D Gaussian splat primitives and the growable scene container.

Each splat is a flat elliptical Gaussian disk: world mean, an orthonormal
tangent frame (t_u, t_v) spanning the disk plane with normal n = t_u x t_v,
standard deviations (s_u >= s_v > 0) along the tangent axes, an opacity in
(0, 1], and an RGB color. The scene stores splats as structure-of-arrays for
the rasterizer, alongside per-splat optimizer state and densification
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyScene

_FRAME_TOL = 1e-6

# per-splat optimizer parameter layout: mu(3) rot(2) log_su log_sv logit_op rgb(3)
N_PARAMS = 11


@dataclass(frozen=True)
class Splat:
    mean: np.ndarray
    tan_u: np.ndarray
    tan_v: np.ndarray
    scale_u: float
    scale_v: float
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        object.__setattr__(self, "tan_u", np.asarray(self.tan_u, dtype=np.float64).reshape(3))
        object.__setattr__(self, "tan_v", np.asarray(self.tan_v, dtype=np.float64).reshape(3))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))
        validate_splat(self)

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.tan_u, self.tan_v)


def validate_splat(s: Splat) -> None:
    if abs(np.linalg.norm(s.tan_u) - 1.0) > _FRAME_TOL:
        raise ValueError("tan_u not unit length")
    if abs(np.linalg.norm(s.tan_v) - 1.0) > _FRAME_TOL:
        raise ValueError("tan_v not unit length")
    if abs(float(s.tan_u @ s.tan_v)) > _FRAME_TOL:
        raise ValueError("tangent frame not orthogonal")
    if not (s.scale_u >= s.scale_v > 0):
        raise ValueError("need scale_u >= scale_v > 0")
    if not (0 < s.opacity <= 1):
        raise ValueError("opacity must be in (0, 1]")


class GaussianScene:
    """Growable splat collection with stable integer ids.

    Arrays are float64 (N, ...) and resized by append; the rasterizer reads
    them directly. The optimizer owns `opt_m` / `opt_v` (Adam moments over the
    11-parameter encoding) and the densifier owns `grad_accum` / `grad_count`.
    """

    def __init__(self):
        self.means = np.zeros((0, 3))
        self.tan_u = np.zeros((0, 3))
        self.tan_v = np.zeros((0, 3))
        self.scales = np.zeros((0, 2))  # columns (s_u, s_v)
        self.opacity = np.zeros(0)
        self.colors = np.zeros((0, 3))
        self.ids = np.zeros(0, dtype=np.int64)
        self.opt_m = np.zeros((0, N_PARAMS))
        self.opt_v = np.zeros((0, N_PARAMS))
        self.opt_steps = np.zeros(0, dtype=np.int64)
        self.grad_accum = np.zeros(0)
        self.grad_count = np.zeros(0, dtype=np.int64)
        self._next_id = 0

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def size(self) -> int:
        return len(self)

    def normals(self) -> np.ndarray:
        return np.cross(self.tan_u, self.tan_v)

    def add(
        self,
        means: np.ndarray,
        tan_u: np.ndarray,
        tan_v: np.ndarray,
        scales: np.ndarray,
        opacity: np.ndarray,
        colors: np.ndarray,
    ) -> np.ndarray:
        """Append splats (batched); returns the assigned ids."""
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        n = means.shape[0]
        tan_u = np.atleast_2d(np.asarray(tan_u, dtype=np.float64))
        tan_v = np.atleast_2d(np.asarray(tan_v, dtype=np.float64))
        scales = np.atleast_2d(np.asarray(scales, dtype=np.float64))
        opacity = np.atleast_1d(np.asarray(opacity, dtype=np.float64))
        colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
        new_ids = np.arange(self._next_id, self._next_id + n, dtype=np.int64)
        self._next_id += n
        self.means = np.vstack([self.means, means])
        self.tan_u = np.vstack([self.tan_u, tan_u])
        self.tan_v = np.vstack([self.tan_v, tan_v])
        self.scales = np.vstack([self.scales, scales])
        self.opacity = np.concatenate([self.opacity, opacity])
        self.colors = np.vstack([self.colors, colors])
        self.ids = np.concatenate([self.ids, new_ids])
        self.opt_m = np.vstack([self.opt_m, np.zeros((n, N_PARAMS))])
        self.opt_v = np.vstack([self.opt_v, np.zeros((n, N_PARAMS))])
        self.opt_steps = np.concatenate([self.opt_steps, np.zeros(n, dtype=np.int64)])
        self.grad_accum = np.concatenate([self.grad_accum, np.zeros(n)])
        self.grad_count = np.concatenate([self.grad_count, np.zeros(n, dtype=np.int64)])
        return new_ids

    def add_splat(self, s: Splat) -> int:
        return int(
            self.add(
                s.mean, s.tan_u, s.tan_v, [s.scale_u, s.scale_v], [s.opacity], s.color
            )[0]
        )

    def keep(self, mask: np.ndarray) -> None:
        """Drop splats where mask is False (prune)."""
        for name in (
            "means",
            "tan_u",
            "tan_v",
            "scales",
            "opacity",
            "colors",
            "ids",
            "opt_m",
            "opt_v",
            "opt_steps",
            "grad_accum",
            "grad_count",
        ):
            setattr(self, name, getattr(self, name)[mask])

    def splat(self, index: int) -> Splat:
        return Splat(
            mean=self.means[index],
            tan_u=self.tan_u[index],
            tan_v=self.tan_v[index],
            scale_u=float(self.scales[index, 0]),
            scale_v=float(self.scales[index, 1]),
            opacity=float(self.opacity[index]),
            color=self.colors[index],
        )

    def require_nonempty(self) -> None:
        if len(self) == 0:
            raise EmptyScene("scene has no splats")

    def canonicalize(self) -> None:
        """Re-establish splat invariants after an optimizer step.

        Gram-Schmidt renormalizes the tangent frame; where s_v > s_u the axes
        are swapped as (t_u, t_v) <- (t_v, -t_u), a 90-degree in-plane rotation
        that preserves the normal. Swapped splats carry their Adam moments
        across the axis relabeling.
        """
        tu = self.tan_u
        tu = tu / np.linalg.norm(tu, axis=1, keepdims=True)
        tv = self.tan_v - (np.sum(self.tan_v * tu, axis=1, keepdims=True)) * tu
        tv = tv / np.linalg.norm(tv, axis=1, keepdims=True)
        self.tan_u, self.tan_v = tu, tv
        self.scales = np.clip(self.scales, 1e-9, None)
        self.opacity = np.clip(self.opacity, 1e-4, 1.0)

        swap = self.scales[:, 1] > self.scales[:, 0]
        if np.any(swap):
            u_old = self.tan_u[swap].copy()
            self.tan_u[swap] = self.tan_v[swap]
            self.tan_v[swap] = -u_old
            self.scales[swap] = self.scales[swap][:, ::-1]
            # swap the (log_su, log_sv) Adam slots; rotation slots stay (the
            # tangent pair rotated rigidly so the parameterization is intact)
            for arr in (self.opt_m, self.opt_v):
                block = arr[swap]
                block[:, [5, 6]] = block[:, [6, 5]]
                arr[swap] = block

    def check_invariants(self, tol: float = _FRAME_TOL) -> None:
        """Raise if any stored splat violates the type invariants."""
        if len(self) == 0:
            return
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate splat ids")
        nu = np.linalg.norm(self.tan_u, axis=1)
        nv = np.linalg.norm(self.tan_v, axis=1)
        dot = np.abs(np.sum(self.tan_u * self.tan_v, axis=1))
        if np.any(np.abs(nu - 1) > tol) or np.any(np.abs(nv - 1) > tol):
            raise ValueError("tangent frame not unit length")
        if np.any(dot > tol):
            raise ValueError("tangent frame not orthogonal")
        if np.any(self.scales[:, 0] < self.scales[:, 1]) or np.any(self.scales <= 0):
            raise ValueError("scale ordering violated")
        if np.any((self.opacity <= 0) | (self.opacity > 1)):
            raise ValueError("opacity out of (0, 1]")

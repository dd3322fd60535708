"""Patch measures, the multi-feature patch distance and edge-guided dominance."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .filters import convolve


@dataclass(frozen=True, eq=False)
class PatchSpec:
    weights: np.ndarray  # (rows, cols) probability measure over offsets

    @property
    def shape(self):
        return self.weights.shape

    @cached_property
    def offsets(self):
        """(dr, dc, weight) arrays in row-major order."""
        rows, cols = self.weights.shape
        dr, dc = np.meshgrid(np.arange(rows) - rows // 2, np.arange(cols) - cols // 2, indexing="ij")
        return dr.ravel(), dc.ravel(), self.weights.ravel().copy()


def patch_measure(shape, kind: str = "gaussian", sigma: float = np.inf) -> PatchSpec:
    """Patch weights ``exp(-|h|^2 / sigma^2)`` (normalized) or uniform.

    ``sigma = inf`` gives the uniform measure for either kind.
    """
    if isinstance(shape, int):
        shape = (shape, shape)
    rows, cols = (int(s) for s in shape)
    if rows < 1 or cols < 1 or rows % 2 == 0 or cols % 2 == 0:
        raise ValueError(f"patch must have odd positive sides, got {rows}x{cols}")
    if kind not in ("gaussian", "uniform"):
        raise ValueError(f"unknown patch measure {kind!r}")
    if not sigma > 0:
        raise ValueError("patch sigma must be positive")
    if kind == "uniform" or np.isinf(sigma):
        w = np.ones((rows, cols))
    else:
        r, c = np.meshgrid(np.arange(rows) - rows // 2, np.arange(cols) - cols // 2, indexing="ij")
        w = np.exp(-(r ** 2 + c ** 2) / sigma ** 2)
    return PatchSpec(w / w.sum())


@dataclass
class FeatureGraph:
    """One feature graph: patch, per-kernel dominance, partition, selectivity.

    ``dominance`` maps a kernel index (into the run's kernel list) to a
    constant or an (H, W) field.  ``selectivity=None`` means the delta-weight
    limit (nearest-neighbor field).
    """
    patch: PatchSpec
    dominance: dict
    partition: object = 1.0
    selectivity: float | None = None

    def __post_init__(self):
        if not any(np.any(np.asarray(v) != 0) for v in self.dominance.values()):
            raise ValueError("feature graph needs at least one kernel with nonzero dominance")
        for v in self.dominance.values():
            if np.any(np.asarray(v) < 0):
                raise ValueError("dominance fields must be nonnegative")
        if self.selectivity is not None and not self.selectivity > 0:
            raise ValueError("selectivity must be positive (or None for delta weights)")

    @property
    def active(self) -> list:
        return sorted(i for i, v in self.dominance.items() if np.any(np.asarray(v) != 0))

    def beta(self, shape) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.partition, dtype=float), shape)


def compute_features(u: np.ndarray, kernels, boundary: str = "replicate") -> np.ndarray:
    """Stack of ``g_i * u`` with shape (H, W, n_kernels, C)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    out = np.empty(u.shape[:2] + (len(kernels), u.shape[2]))
    for i, k in enumerate(kernels):
        out[:, :, i, :] = convolve(u, k, boundary)
    return out


class FeatureView:
    """The feature columns and dominance weights one graph compares.

    Columns are (kernel, channel) pairs of the graph's active kernels; all
    channels of a kernel share its dominance field.
    """

    def __init__(self, features: np.ndarray, graph: FeatureGraph):
        self.graph = graph
        active = graph.active
        H, W, _, C = features.shape
        self.shape = (H, W)
        self.n_channels = C
        self.values = np.ascontiguousarray(features[:, :, active, :].reshape(H, W, -1))
        lams = [np.asarray(graph.dominance[i], dtype=float) for i in active]
        if all(lam.ndim == 0 for lam in lams):
            self.lam_const = np.repeat([float(lam) for lam in lams], C)
            self.lam_field = None
        else:
            self.lam_const = None
            self.lam_field = np.repeat(
                np.stack([np.broadcast_to(lam, (H, W)) for lam in lams], axis=-1), C, axis=-1)
        self.dr, self.dc, self.dp = graph.patch.offsets
        # zero-padded copies let gather index without clipping
        self._hr, self._hc = (s // 2 for s in graph.patch.shape)
        widths = ((self._hr, self._hr), (self._hc, self._hc))
        self._vals = np.pad(self.values, widths + ((0, 0),))
        self._inside = np.pad(np.ones((H, W), dtype=bool), widths)
        self._lam = None if self.lam_field is None else np.pad(self.lam_field, widths + ((0, 0),))

    @property
    def n_columns(self) -> int:
        return self.values.shape[2]

    def gather(self, points: np.ndarray, with_lambda: bool = False):
        """Patch samples around flat pixel indices.

        Returns (values (n, P, F), in-grid mask (n, P)) and, on request, the
        dominance weights at the sample positions (n, P, F).
        """
        W = self.shape[1]
        pr, pc = np.divmod(np.asarray(points, dtype=np.int64), W)
        Wp = W + 2 * self._hc
        flat = (pr + self._hr) * Wp + pc + self._hc
        idx = flat[:, None] + (self.dr * Wp + self.dc)[None, :]
        F = self._vals.shape[2]
        vals = self._vals.reshape(-1, F)[idx]
        inside = self._inside.ravel()[idx]
        if not with_lambda:
            return vals, inside
        if self._lam is None:
            lam = np.broadcast_to(self.lam_const, vals.shape)
        else:
            lam = self._lam.reshape(-1, F)[idx]
        return vals, inside, lam

    def pair_distances(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Direct evaluation of the patch distance for paired flat indices.

        Offsets leaving the grid at either end are dropped and the patch
        measure is renormalized over the surviving ones.
        """
        a, mx, lam = self.gather(xs, with_lambda=True)
        b, my = self.gather(ys)
        diff = a - b
        t = np.sum(lam * (diff * diff), axis=2)
        wp = self.dp[None, :] * mx * my
        return np.sum(wp * t, axis=1) / np.sum(wp, axis=1)


def patch_distance(features: np.ndarray, graph: FeatureGraph, x, y) -> float:
    """Patch distance between pixels ``x`` and ``y`` given as (row, col)."""
    view = features if isinstance(features, FeatureView) else FeatureView(features, graph)
    W = view.shape[1]
    xi = np.array([x[0] * W + x[1]])
    yi = np.array([y[0] * W + y[1]])
    return float(view.pair_distances(xi, yi)[0])


def distance_transform(edges: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest true pixel (``inf`` if none)."""
    edges = np.asarray(edges, dtype=bool)
    if not edges.any():
        return np.full(edges.shape, np.inf)
    return ndimage.distance_transform_edt(~edges)


def aniso_lambda(edges: np.ndarray, lam_a: float = 0.1, tau: float = 20.0) -> np.ndarray:
    """Edge-guided dominance ``(1 - lam_a) exp(-DT / tau) + lam_a``."""
    if not 0.0 <= lam_a <= 1.0:
        raise ValueError("lam_a must lie in [0, 1]")
    if not tau > 0:
        raise ValueError("tau must be positive")
    return (1.0 - lam_a) * np.exp(-distance_transform(edges) / tau) + lam_a


def normalize_partitions(betas, shape, region=None) -> list:
    """Rescale partition fields to sum to one at every pixel.

    Raises if all fields vanish at a pixel of ``region`` (default: anywhere).
    Pixels outside ``region`` where all vanish are left at zero.
    """
    fields = [np.broadcast_to(np.asarray(b, dtype=float), shape).copy() for b in betas]
    if any(np.any(f < 0) for f in fields):
        raise ValueError("partition fields must be nonnegative")
    total = np.sum(fields, axis=0)
    check = total == 0
    if region is not None:
        check &= region
    if check.any():
        r, c = np.argwhere(check)[0]
        raise ValueError(f"partition fields all vanish at pixel ({r}, {c})")
    safe = np.where(total > 0, total, 1.0)
    return [f / safe for f in fields]

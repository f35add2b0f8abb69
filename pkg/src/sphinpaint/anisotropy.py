"""Per-point anisotropy tensors from the local distribution of mask points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mask import InpaintingMask

DEGENERATE_RTOL = 1e-12
ISOTROPIC_RTOL = 1e-12


@dataclass(frozen=True)
class CovarianceEstimate:
    c: np.ndarray       # 2x2 weighted covariance, length^2
    mean: np.ndarray    # weighted mean position (x, y)
    count: int


def window_points(mask: InpaintingMask, j: int, window: int = 25) -> np.ndarray:
    """Indices of the mask points in the ``window x window`` box around point ``j``."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd number")
    half = window // 2
    x, y = int(mask.xs[j]), int(mask.ys[j])
    w, h = mask.dims
    box = mask.index_grid[max(y - half, 0):min(y + half + 1, h), max(x - half, 0):min(x + half + 1, w)]
    return box[box >= 0]


def local_covariance(mask: InpaintingMask, j: int, window: int = 25, weights: str = "gauss") -> CovarianceEstimate:
    idx = window_points(mask, j, window)
    px = mask.xs[idx].astype(np.float64)
    py = mask.ys[idx].astype(np.float64)
    if weights == "gauss":
        sigma = window / 4.0
        d2 = (px - mask.xs[j]) ** 2 + (py - mask.ys[j]) ** 2
        wt = np.exp(-d2 / (2 * sigma * sigma))
    elif weights == "uniform":
        wt = np.ones(idx.size)
    else:
        raise ValueError(f"unknown weight function {weights!r}")
    wt = wt / wt.sum()
    mx, my = wt @ px, wt @ py
    dx, dy = px - mx, py - my
    c = np.array([[wt @ (dx * dx), wt @ (dx * dy)],
                  [wt @ (dx * dy), wt @ (dy * dy)]])
    return CovarianceEstimate(c, np.array([mx, my]), int(idx.size))


def tensor_from_covariance(c, h: float, max_ratio: float = 8.0):
    """``G = Q diag(1/l) Q^T`` with axis lengths ``l = sqrt(eig(C))``.

    Lengths are rescaled so that ``sqrt(l1 * l2) == h`` and their ratio is
    clamped to ``max_ratio``.  Returns None for degenerate covariances.
    """
    lam, q = np.linalg.eigh(np.asarray(c, dtype=np.float64))
    if not lam[1] > 0 or lam[0] <= DEGENERATE_RTOL * lam[1]:
        return None
    ell = np.sqrt(lam)
    ratio = min(ell[1] / ell[0], max_ratio)
    if ratio - 1.0 <= ISOTROPIC_RTOL:
        return np.eye(2) / h
    s = math.sqrt(ratio)
    ell = np.array([h / s, h * s])
    g = (q / ell) @ q.T
    return 0.5 * (g + g.T)


def estimate_tensor(mask: InpaintingMask, j: int, window: int = 25, min_points: int = 15,
                    weights: str = "gauss", max_ratio: float = 8.0, h: float | None = None):
    """Anisotropy tensor of point ``j``, or None if it stays isotropic."""
    if max_ratio < 1:
        raise ValueError("max_ratio must be >= 1")
    est = local_covariance(mask, j, window, weights)
    if est.count < min_points:
        return None
    return tensor_from_covariance(est.c, mask.smoothing[j] if h is None else h, max_ratio)


def install_anisotropy(mask: InpaintingMask, replay=None, window: int = 25, min_points: int = 15,
                       weights: str = "gauss", max_ratio: float = 8.0) -> tuple[InpaintingMask, int]:
    """Attach tensors to every point with a usable neighborhood.

    Lengths are area-matched to each point's smoothing length.  ``replay``
    is accepted for interface symmetry with the other stages; the growth
    loop rescales tensors by the step count itself, so the settled steps
    it records are not folded into ``G``.
    """
    tensors = np.full((len(mask), 2, 2), np.nan)
    count = 0
    for j in range(len(mask)):
        g = estimate_tensor(mask, j, window, min_points, weights, max_ratio)
        if g is not None:
            tensors[j] = g
            count += 1
    if count == 0:
        return mask, 0
    return mask.with_tensors(tensors), count

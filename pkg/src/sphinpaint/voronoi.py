"""Exact squared Euclidean distance transform and discrete Voronoi cells.

Two 1-D lower-envelope passes (columns, then rows) in the style of
Felzenszwalb and Huttenlocher.  Each pass carries the seed index of the
winning parabola so the label map comes for free.  Among equidistant
seeds the lowest index wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .image import GrayImage
from .mask import InpaintingMask

_INF = np.inf


@numba.njit(cache=True)
def _envelope_1d(f, lab, n, out_d, out_l, v, z):
    """1-D transform of sampled function ``f`` (inf = no seed) of length ``n``.

    Parabolas that touch the envelope in a single point are kept so that
    ties can be resolved by label afterwards.
    """
    k = -1
    for q in range(n):
        if f[q] == _INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -_INF
            z[1] = _INF
            continue
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
            if s < z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -_INF
            z[1] = _INF
            continue
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    if k < 0:
        for q in range(n):
            out_d[q] = _INF
            out_l[q] = -1
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        p = v[j]
        best = (q - p) * (q - p) + f[p]
        bl = lab[p]
        # other parabolas whose interval starts exactly at q tie candidates
        i = j + 1
        while i <= k and z[i] <= q:
            p2 = v[i]
            val = (q - p2) * (q - p2) + f[p2]
            if val < best or (val == best and lab[p2] < bl):
                best = val
                bl = lab[p2]
            i += 1
        out_d[q] = best
        out_l[q] = bl


@numba.njit(cache=True)
def _transform(seed_grid):
    h, w = seed_grid.shape
    n = max(h, w)
    f = np.empty(n)
    lab = np.empty(n, dtype=np.int64)
    od = np.empty(n)
    ol = np.empty(n, dtype=np.int64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    col_d = np.empty((h, w))
    col_l = np.empty((h, w), dtype=np.int64)
    for x in range(w):
        for y in range(h):
            s = seed_grid[y, x]
            f[y] = 0.0 if s >= 0 else _INF
            lab[y] = s
        _envelope_1d(f, lab, h, od, ol, v, z)
        for y in range(h):
            col_d[y, x] = od[y]
            col_l[y, x] = ol[y]
    dist = np.empty((h, w))
    label = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            f[x] = col_d[y, x]
            lab[x] = col_l[y, x]
        _envelope_1d(f, lab, w, od, ol, v, z)
        for x in range(w):
            dist[y, x] = od[x]
            label[y, x] = ol[x]
    return dist, label


@dataclass(frozen=True)
class VoronoiDiagram:
    label: np.ndarray   # (height, width) seed index
    dist2: np.ndarray   # (height, width) squared distance, integer valued
    area: np.ndarray    # pixels per seed

    @property
    def dims(self) -> tuple[int, int]:
        return self.label.shape[1], self.label.shape[0]


def distance_transform(mask: InpaintingMask) -> VoronoiDiagram:
    """Squared distances to the nearest mask point, with cell labels and areas."""
    if len(mask) == 0:
        raise ValueError("empty mask")
    dist, label = _transform(np.ascontiguousarray(mask.index_grid))
    area = np.bincount(label.ravel(), minlength=len(mask)).astype(np.float64)
    for a in (dist, label, area):
        a.flags.writeable = False
    return VoronoiDiagram(label, dist, area)


def pixel_errors(f: GrayImage, u: GrayImage) -> np.ndarray:
    if f.dims != u.dims:
        raise ValueError(f"dimension mismatch: {f.dims} vs {u.dims}")
    d = f.data - u.data
    return d * d


def cell_errors(diagram: VoronoiDiagram, f: GrayImage, u: GrayImage) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell sums of squared errors and the per-pixel errors they sum."""
    if diagram.dims != f.dims:
        raise ValueError(f"dimension mismatch: diagram {diagram.dims} vs image {f.dims}")
    e = pixel_errors(f, u)
    cells = np.bincount(diagram.label.ravel(), weights=e.ravel(), minlength=diagram.area.size)
    return cells, e


def label_image(diagram: VoronoiDiagram) -> GrayImage:
    """Label map modulo 256, for eyeballing the tessellation."""
    return GrayImage((diagram.label % 256).astype(np.float64))

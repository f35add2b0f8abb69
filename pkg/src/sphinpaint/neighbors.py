"""Scatter-approach neighbor detection and adaptive support growth.

A seed ``j`` is a neighbor of pixel ``q`` at growth step ``k`` when ``q``
lies inside the seed's support: ``|q - p_j| <= k * h_j`` for isotropic
seeds, ``|G_j (q - p_j)| <= k`` for anisotropic ones.  Supports are
rasterized seed by seed over their bounding boxes, never searched per
pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .kernels import KernelSpec
from .mask import InpaintingMask

COLLINEAR_RTOL = 1e-9


@dataclass(frozen=True)
class NeighborField:
    """Per-pixel neighbor lists in CSR layout over row-major pixels."""

    dims: tuple[int, int]
    k: int
    indptr: np.ndarray
    seeds: np.ndarray

    def neighbors(self, x: int, y: int) -> np.ndarray:
        i = y * self.dims[0] + x
        return self.seeds[self.indptr[i]:self.indptr[i + 1]]

    def counts(self) -> np.ndarray:
        w, h = self.dims
        return np.diff(self.indptr).reshape(h, w)


def _aniso_scale(g, ox, oy):
    ex = g[..., 0, 0] * ox + g[..., 0, 1] * oy
    ey = g[..., 1, 0] * ox + g[..., 1, 1] * oy
    return np.hypot(ex, ey)


def support_scale(mask: InpaintingMask, seed, ox, oy) -> np.ndarray:
    """Growth step at which the pair enters the seed's support (real valued).

    The pair is a neighbor at step ``k`` iff ``scale <= k`` and its
    normalized kernel radius is ``scale / k``.
    """
    s = np.hypot(ox, oy) / mask.smoothing[seed]
    aniso = mask.anisotropic[seed]
    if aniso.any():
        s[aniso] = _aniso_scale(mask.tensors[seed[aniso]], ox[aniso], oy[aniso])
    return s


@numba.njit(cache=True)
def _stamp_kernel(xs, ys, hs, g, aniso, w, h, lo, hi, open_px, out_pix, out_seed, out_ox, out_oy, fill):
    n = 0
    for j in range(xs.size):
        if aniso[j]:
            det = g[j, 0, 0] * g[j, 1, 1] - g[j, 0, 1] * g[j, 1, 0]
            # bounding box of |G o| <= hi from the diagonal of (G^T G)^-1
            m00 = (g[j, 1, 0] ** 2 + g[j, 1, 1] ** 2) / det ** 2
            m11 = (g[j, 0, 0] ** 2 + g[j, 0, 1] ** 2) / det ** 2
            rx = int(math.floor(hi * math.sqrt(m00) + 1e-9))
            ry = int(math.floor(hi * math.sqrt(m11) + 1e-9))
        else:
            rx = int(math.floor(hi * hs[j] + 1e-9))
            ry = rx
        x0, x1 = max(xs[j] - rx, 0), min(xs[j] + rx, w - 1)
        y0, y1 = max(ys[j] - ry, 0), min(ys[j] + ry, h - 1)
        for y in range(y0, y1 + 1):
            oy = y - ys[j]
            for x in range(x0, x1 + 1):
                q = y * w + x
                if not open_px[q]:
                    continue
                ox = x - xs[j]
                if aniso[j]:
                    s = math.hypot(g[j, 0, 0] * ox + g[j, 0, 1] * oy, g[j, 1, 0] * ox + g[j, 1, 1] * oy)
                else:
                    s = math.hypot(ox, oy) / hs[j]
                if s > lo and s <= hi:
                    if fill:
                        out_pix[n] = q
                        out_seed[n] = j
                        out_ox[n] = ox
                        out_oy[n] = oy
                    n += 1
    return n


def _stamp(mask: InpaintingMask, lo: float, hi: float, open_px=None):
    """(pixel, seed, ox, oy) for all pairs with ``lo < scale <= hi``.

    ``ox, oy`` are pixel minus seed.  Only pixels inside the image (and
    flagged in ``open_px`` when given) are visited.
    """
    w, h = mask.dims
    if open_px is None:
        open_px = np.ones(w * h, dtype=np.bool_)
    g = np.nan_to_num(mask.tensors)
    args = (mask.xs.astype(np.int64), mask.ys.astype(np.int64), mask.smoothing.astype(np.float64),
            np.ascontiguousarray(g, dtype=np.float64), mask.anisotropic.astype(np.bool_),
            int(w), int(h), float(lo), float(hi), open_px)
    e = np.empty(0, dtype=np.int64)
    n = _stamp_kernel(*args, e, e, e, e, False)
    out = [np.empty(n, dtype=np.int64) for _ in range(4)]
    _stamp_kernel(*args, *out, True)
    return tuple(out)


def stamp_neighbors(mask: InpaintingMask, k: int) -> NeighborField:
    """Neighbor lists of every pixel at growth step ``k`` (sorted by seed)."""
    if k < 1:
        raise ValueError("growth step must be >= 1")
    w, h = mask.dims
    pix, seed, _, _ = _stamp(mask, -1.0, float(k))
    order = np.lexsort((seed, pix))
    pix, seed = pix[order], seed[order]
    indptr = np.zeros(w * h + 1, dtype=np.int64)
    np.cumsum(np.bincount(pix, minlength=w * h), out=indptr[1:])
    return NeighborField((w, h), k, indptr, seed)


def normalized_radius(mask: InpaintingMask, seed, ox, oy, k) -> np.ndarray:
    """|eta| of each pair at growth step ``k`` (scalar or per pair)."""
    return support_scale(mask, seed, ox, oy) / k


def kernel_weights(mask: InpaintingMask, kernel: KernelSpec, areas, seed, ox, oy, k) -> np.ndarray:
    """``W(q - p_j) * V_j`` at growth step ``k`` (scalar or per pair)."""
    k = np.asarray(k, dtype=np.float64)
    r = support_scale(mask, seed, ox, oy) / k
    hk = k * mask.smoothing[seed]
    scale = 1.0 / (hk * hk)
    aniso = mask.anisotropic[seed]
    if aniso.any():
        g = mask.tensors[seed[aniso]]
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        ka = k[aniso] if k.ndim else k
        scale[aniso] = det / (ka * ka)
    return kernel.profile(r) * scale * areas[seed]


def effective_step(kernel: KernelSpec, scale: np.ndarray) -> np.ndarray:
    """Smallest integer step ``k >= 1`` at which ``W(scale / k) > 0``."""
    k = np.maximum(np.ceil(scale), 1.0)
    if not kernel.truncated:
        k = np.where(scale == k, k + 1, k)
    # guard against rounding in scale / k
    k = np.where(kernel.positive(scale / k), k, k + 1)
    lower = np.maximum(k - 1, 1.0)
    k = np.where((k > 1) & kernel.positive(scale / lower), lower, k)
    return k.astype(np.int64)


def _moments(seg, ox, oy, n_seg):
    cnt = np.bincount(seg, minlength=n_seg).astype(np.float64)
    return (cnt, np.bincount(seg, ox, n_seg), np.bincount(seg, oy, n_seg),
            np.bincount(seg, ox * ox, n_seg), np.bincount(seg, ox * oy, n_seg),
            np.bincount(seg, oy * oy, n_seg))


def _collinear_from_moments(cnt, sx, sy, sxx, sxy, syy):
    # scatter matrix scaled by the count keeps integer inputs exact
    cxx = cnt * sxx - sx * sx
    cxy = cnt * sxy - sx * sy
    cyy = cnt * syy - sy * sy
    tr = cxx + cyy
    lmax = 0.5 * (tr + np.sqrt(np.maximum((cxx - cyy) ** 2 + 4 * cxy * cxy, 0.0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        lmin = (cxx * cyy - cxy * cxy) / lmax
    return ~(lmin > COLLINEAR_RTOL * lmax) | (cnt < 3)


def collinear(seg, ox, oy, n_seg: int) -> np.ndarray:
    """Per segment: are all listed positions affinely dependent?

    Smallest eigenvalue of the position scatter matrix at most
    ``COLLINEAR_RTOL`` times the largest; fewer than three points count
    as collinear.
    """
    return _collinear_from_moments(*_moments(seg, ox.astype(np.float64), oy.astype(np.float64), n_seg))


@dataclass
class Candidates:
    """Pixels offered to an inpainting step, with their effective neighbors.

    Pairs are grouped by pixel (``ptr`` delimits each pixel's slice, ``seg``
    maps a pair to its pixel) and sorted by seed index inside each group.
    ``k`` is the growth step of each pixel.
    """

    k: np.ndarray
    pixels: np.ndarray
    ptr: np.ndarray
    seg: np.ndarray
    seeds: np.ndarray
    ox: np.ndarray
    oy: np.ndarray
    weights: np.ndarray
    final: bool = False

    def __len__(self):
        return self.pixels.size


StepFn = Callable[[Candidates], tuple[np.ndarray, np.ndarray]]


@dataclass
class GrowthResult:
    values: np.ndarray      # flat reconstruction
    settle_k: np.ndarray    # flat, 0 at known pixels
    order: np.ndarray       # flat, -1 known, 0 zero order, 1 first order
    indptr: np.ndarray      # CSR over all pixels (known pixels have empty rows)
    seeds: np.ndarray


def cover_step(mask: InpaintingMask) -> int:
    """A growth step from which every support contains the whole image."""
    w, h = mask.dims
    diag = math.hypot(w - 1, h - 1)
    reach = mask.smoothing.copy()
    if mask.anisotropic.any():
        g = mask.tensors[mask.anisotropic]
        reach[mask.anisotropic] = 1.0 / np.linalg.eigvalsh(g)[:, -1]
    return int(math.ceil(diag / reach.min())) + 1


FIRST_ROUND = 4


@numba.njit(cache=True)
def _group_pairs(pix, seed, keff, n):
    """Permutation grouping pairs by pixel, each group ordered by (keff, seed)."""
    ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(pix.size):
        ptr[pix[i] + 1] += 1
    for q in range(n):
        ptr[q + 1] += ptr[q]
    fill = ptr[:-1].copy()
    perm = np.empty(pix.size, dtype=np.int64)
    for i in range(pix.size):
        perm[fill[pix[i]]] = i
        fill[pix[i]] += 1
    span = seed.max() + 1 if seed.size else 1
    for q in range(n):
        a, b = ptr[q], ptr[q + 1]
        if b - a > 32:
            idx = perm[a:b]
            key = keff[idx] * span + seed[idx]
            perm[a:b] = idx[np.argsort(key, kind="mergesort")]
        else:
            for i in range(a + 1, b):
                cur = perm[i]
                ck = keff[cur] * span + seed[cur]
                j = i - 1
                while j >= a and keff[perm[j]] * span + seed[perm[j]] > ck:
                    perm[j + 1] = perm[j]
                    j -= 1
                perm[j + 1] = cur
    return perm, ptr


@numba.njit(cache=True)
def _first_eligible(ptr, keff, ox, oy, m, limit, noncol, rtol, tried, open_px):
    """Per pixel, the last index of the first qualifying prefix (-1 if none).

    A prefix ends where the step changes; it qualifies when its step lies
    in ``(tried, limit]``, it holds at least ``m`` pairs and, with
    ``noncol``, its positions are not collinear.
    """
    n = ptr.size - 1
    out = np.full(n, -1, dtype=np.int64)
    for q in range(n):
        if not open_px[q]:
            continue
        a, b = ptr[q], ptr[q + 1]
        cnt = 0.0
        sx = sy = sxx = sxy = syy = 0.0
        for i in range(a, b):
            k = keff[i]
            if k > limit:
                break
            x = float(ox[i])
            y = float(oy[i])
            cnt += 1.0
            sx += x
            sy += y
            sxx += x * x
            sxy += x * y
            syy += y * y
            if i + 1 < b and keff[i + 1] == k:
                continue
            if k <= tried[q] or cnt < m:
                continue
            if noncol:
                cxx = cnt * sxx - sx * sx
                cxy = cnt * sxy - sx * sy
                cyy = cnt * syy - sy * sy
                lmax = 0.5 * (cxx + cyy + math.sqrt(max((cxx - cyy) ** 2 + 4 * cxy * cxy, 0.0)))
                if cnt < 3 or not ((cxx * cyy - cxy * cxy) / lmax > rtol * lmax):
                    continue
            out[q] = i
            break
    return out


def _offer(mask, kernel, areas, step, acc, ptr, pos, kq, final):
    """Offer every pixel the pairs up to its index in ``pos``."""
    a_seed, a_ox, a_oy = acc[1], acc[2], acc[3]
    pixels = np.flatnonzero(pos >= 0)
    last = pos[pixels]
    kq = kq[pixels]
    counts = last - ptr[pixels] + 1
    offs = np.repeat(np.cumsum(counts) - counts, counts)
    sel = np.repeat(ptr[pixels], counts) + np.arange(counts.sum()) - offs
    seg = np.repeat(np.arange(pixels.size), counts)
    sel = sel[np.lexsort((a_seed[sel], seg))]
    c_seed, c_ox, c_oy = a_seed[sel], a_ox[sel], a_oy[sel]
    cptr = np.zeros(pixels.size + 1, dtype=np.int64)
    np.cumsum(counts, out=cptr[1:])
    wts = kernel_weights(mask, kernel, areas, c_seed, c_ox, c_oy, kq[seg])
    cands = Candidates(kq, pixels, cptr, seg, c_seed, c_ox, c_oy, wts, final)
    vals, ords = step(cands)
    return cands, np.asarray(vals, dtype=np.float64), ords


def grow_until_covered(mask: InpaintingMask, min_neighbors: int, inpaint_step: StepFn, *,
                       kernel: KernelSpec, areas=None, require_noncollinear: bool = False) -> GrowthResult:
    """Settle every unknown pixel at the first growth step that qualifies it.

    A pixel qualifies at step ``k`` (supports ``k * h_j`` or ``G_j / k``)
    when it has at least ``min_neighbors`` effective neighbors (positive
    kernel weight) and, if ``require_noncollinear``, those neighbors are
    not collinear.  ``inpaint_step`` gets the qualifying pixels and
    returns ``(values, orders)``; a NaN value defers the pixel to its next
    qualifying step.  Pixels still open once supports cover the whole
    image are offered at that step with ``Candidates.final`` set and the
    collinearity gate dropped.

    Every pixel's outcome depends only on its own neighbor sets, so
    instead of one pass per step the supports are rasterized in rings of
    doubling radius and the first qualifying step is read off each
    pixel's pairs sorted by entry step.  The result is identical to
    stepping ``k = 1, 2, 3, ...``.
    """
    if min_neighbors < 1:
        raise ValueError("min_neighbors must be >= 1")
    if len(mask) < min_neighbors:
        raise ValueError(f"mask has {len(mask)} points, fewer than min_neighbors={min_neighbors}")
    w, h = mask.dims
    n = w * h
    m = int(min_neighbors)
    if areas is None:
        areas = mask.areas
    values = np.zeros(n)
    values[mask.flat] = mask.gray
    settle_k = np.zeros(n, dtype=np.int32)
    order = np.full(n, -1, dtype=np.int8)
    unsettled = np.ones(n, dtype=bool)
    unsettled[mask.flat] = False
    tried = np.zeros(n, dtype=np.int64)   # last step offered to each pixel
    chunks = []

    def offer(acc, ptr, pos, kq, final):
        cands, vals, ords = _offer(mask, kernel, areas, inpaint_step, acc, ptr, pos, kq, final)
        tried[cands.pixels] = cands.k
        done = np.isfinite(vals)
        if done.any():
            dp = cands.pixels[done]
            values[dp] = vals[done]
            order[dp] = ords[done]
            settle_k[dp] = cands.k[done]
            unsettled[dp] = False
            pd = done[cands.seg]
            chunks.append((cands.pixels[cands.seg[pd]], cands.seeds[pd]))

    k_cover = cover_step(mask)
    e = np.empty(0, dtype=np.int64)
    acc = [e, e, e, e, e]   # pixel, seed, ox, oy, effective step
    lo, hi = -1.0, float(FIRST_ROUND)
    while unsettled.any():
        final = hi >= k_cover
        pix, seed, ox, oy = _stamp(mask, lo, min(hi, float(k_cover)), unsettled)
        keff = effective_step(kernel, support_scale(mask, seed, ox, oy))
        if final:
            keep = keff <= k_cover
            pix, seed, ox, oy, keff = pix[keep], seed[keep], ox[keep], oy[keep], keff[keep]
        acc = [np.concatenate([a, b]) for a, b in zip(acc, (pix, seed, ox, oy, keff))]
        perm, ptr = _group_pairs(acc[0], acc[1], acc[4], n)
        acc = [a[perm] for a in acc]
        limit = k_cover if final else int(math.floor(hi))
        while True:
            pos = _first_eligible(ptr, acc[4], acc[2], acc[3], m, limit, require_noncollinear,
                                  COLLINEAR_RTOL, tried, unsettled)
            if not (pos >= 0).any():
                break
            offer(acc, ptr, pos, acc[4][np.maximum(pos, 0)], False)

        if final:
            # force the rest with everything inside the covering support
            open_px = unsettled & (np.diff(ptr) >= m)
            pos = np.where(open_px, ptr[1:] - 1, -1)
            if open_px.any():
                offer(acc, ptr, pos, np.full(n, k_cover, dtype=np.int64), True)
            if unsettled.any():
                raise RuntimeError(f"{int(unsettled.sum())} pixels could not be inpainted")
            break

        keep = unsettled[acc[0]]
        acc = [a[keep] for a in acc]
        lo, hi = hi, 2 * hi

    if chunks:
        all_pix = np.concatenate([c[0] for c in chunks])
        all_seed = np.concatenate([c[1] for c in chunks])
        o = np.lexsort((all_seed, all_pix))
        all_pix, all_seed = all_pix[o], all_seed[o]
    else:
        all_pix = all_seed = e
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_pix, minlength=n), out=indptr[1:])
    return GrowthResult(values, settle_k, order, indptr, all_seed)

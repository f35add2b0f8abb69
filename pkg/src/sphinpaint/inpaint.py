"""Zero-order, first-order and mixed-order SPH reconstruction."""

from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .image import GrayImage
from .kernels import KernelSpec
from .mask import InpaintingMask
from .neighbors import Candidates, GrowthResult, grow_until_covered

PIVOT_RTOL = 1e-12
REPLAY_VERSION = 1


class Order(str, enum.Enum):
    ZERO = "0"
    FIRST = "1"
    MIXED = "mixed"

    @classmethod
    def parse(cls, value) -> "Order":
        if isinstance(value, Order):
            return value
        aliases = {"zero": "0", "first": "1", "0": "0", "1": "1", "mixed": "mixed"}
        try:
            return cls(aliases[str(value).lower()])
        except KeyError:
            raise ValueError(f"unknown consistency order {value!r}") from None


class SingularSystem(ArithmeticError):
    pass


class NoEffectiveNeighbors(ArithmeticError):
    pass


# --- per-pixel rules, vectorized over segments ------------------------------

def shepard_weights(seg, w, n_seg):
    """Normalized weights; rows with zero total weight come back NaN."""
    total = np.bincount(seg, w, n_seg)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(total > 0, 1.0 / total, np.nan)
    return w * inv[seg]


def _solve3_batched(d, rhs):
    """Solve ``D b = rhs`` for a stack of symmetric PSD 3x3 matrices.

    Root-free Cholesky (LDL^T) first; systems whose relative pivot falls
    below ``PIVOT_RTOL`` are retried with pivoted LU and flagged singular
    if that fails too.
    """
    scale = np.max(np.abs(d[:, [0, 1, 2], [0, 1, 2]]), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d1 = d[:, 0, 0]
        l10 = d[:, 1, 0] / d1
        l20 = d[:, 2, 0] / d1
        d2 = d[:, 1, 1] - l10 * l10 * d1
        l21 = (d[:, 2, 1] - l20 * l10 * d1) / d2
        d3 = d[:, 2, 2] - l20 * l20 * d1 - l21 * l21 * d2
        ok = (np.minimum(np.minimum(d1, d2), d3) > PIVOT_RTOL * scale) & (scale > 0)
        y0 = rhs[:, 0]
        y1 = rhs[:, 1] - l10 * y0
        y2 = rhs[:, 2] - l20 * y0 - l21 * y1
        b2 = y2 / d3
        b1 = y1 / d2 - l21 * b2
        b0 = y0 / d1 - l10 * b1 - l20 * b2
    b = np.stack([b0, b1, b2], axis=1)
    singular = ~ok
    for i in np.flatnonzero(~ok):
        sol = _solve3_lu(d[i], rhs[i])
        if sol is not None:
            b[i] = sol
            singular[i] = False
    b[singular] = np.nan
    return b, singular


def _solve3_lu(d, rhs):
    if not np.all(np.isfinite(d)):
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(d, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.max() == 0 or diag.min() <= PIVOT_RTOL * diag.max():
        return None
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def first_order_weights(seg, ox, oy, w, n_seg):
    """Modified-kernel weights reproducing affine functions.

    ``ox, oy`` are pixel-minus-seed offsets, so ``v_j = (1, -ox, -oy)``.
    The moment system is set up in coordinates centred on the weighted
    centroid ``c`` of the neighbors, where it is far better conditioned;
    the right-hand side ``(1, -c)`` evaluates the same local plane at the
    pixel.  Returns the pair weights and a per-segment singular flag;
    singular rows carry NaN weights.
    """
    vx, vy = -ox.astype(np.float64), -oy.astype(np.float64)
    total = np.bincount(seg, w, n_seg)
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = np.bincount(seg, w * vx, n_seg) / total
        cy = np.bincount(seg, w * vy, n_seg) / total
    dx, dy = vx - cx[seg], vy - cy[seg]
    d = np.zeros((n_seg, 3, 3))
    d[:, 0, 0] = total
    d[:, 1, 1] = np.bincount(seg, w * dx * dx, n_seg)
    d[:, 1, 2] = d[:, 2, 1] = np.bincount(seg, w * dx * dy, n_seg)
    d[:, 2, 2] = np.bincount(seg, w * dy * dy, n_seg)
    rhs = np.stack([np.ones(n_seg), -cx, -cy], axis=1)
    b, singular = _solve3_batched(d, rhs)
    bs = b[seg]
    wt = (bs[:, 0] + bs[:, 1] * dx + bs[:, 2] * dy) * w
    # one refinement step on the moments the weights actually reproduce
    res = rhs - np.stack([np.bincount(seg, wt, n_seg), np.bincount(seg, wt * dx, n_seg),
                          np.bincount(seg, wt * dy, n_seg)], axis=1)
    res[singular] = 0.0
    delta, _ = _solve3_batched(d, res)
    ds = np.nan_to_num(delta)[seg]
    return wt + (ds[:, 0] + ds[:, 1] * dx + ds[:, 2] * dy) * w, singular


def _segment_sum(seg, x, n_seg):
    return np.bincount(seg, x, n_seg)


def _unpack(q, neighbors):
    """(positions, values, weights) from an iterable of (p, f, W, V) tuples."""
    if len(neighbors) == 0:
        raise NoEffectiveNeighbors("no neighbors")
    p = np.array([nb[0] for nb in neighbors], dtype=np.float64).reshape(-1, 2)
    f = np.array([nb[1] for nb in neighbors], dtype=np.float64)
    wv = np.array([nb[2] * nb[3] for nb in neighbors], dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return q[0] - p[:, 0], q[1] - p[:, 1], f, wv


def shepard_value(q, neighbors) -> float:
    """Normalized weighted mean; ``neighbors`` holds ``(p_j, f_j, W_j, V_j)``."""
    ox, oy, f, w = _unpack(q, neighbors)
    seg = np.zeros(f.size, dtype=np.int64)
    wt = shepard_weights(seg, w, 1)
    if not np.all(np.isfinite(wt)):
        raise NoEffectiveNeighbors("all neighbor weights vanish")
    return float(np.sum(wt * f))


def first_order_value(q, neighbors) -> float:
    ox, oy, f, w = _unpack(q, neighbors)
    seg = np.zeros(f.size, dtype=np.int64)
    wt, singular = first_order_weights(seg, ox, oy, w, 1)
    if singular[0]:
        raise SingularSystem("moment matrix is singular")
    return float(np.sum(wt * f))


def mixed_value(q, neighbors, f_true: float) -> tuple[float, Order]:
    """Keep whichever of the two reconstructions is closer to ``f_true``.

    Collinear or singular neighborhoods use zero order outright; ties go
    to zero order as well.
    """
    from .neighbors import collinear
    u0 = shepard_value(q, neighbors)
    ox, oy, _, _ = _unpack(q, neighbors)
    if collinear(np.zeros(ox.size, dtype=np.int64), ox, oy, 1)[0]:
        return u0, Order.ZERO
    try:
        u1 = first_order_value(q, neighbors)
    except SingularSystem:
        return u0, Order.ZERO
    if (f_true - u1) ** 2 < (f_true - u0) ** 2:
        return u1, Order.FIRST
    return u0, Order.ZERO


# --- image driver ------------------------------------------------------------

@dataclass
class ReplayLog:
    """Everything needed to rebuild the linear reconstruction operator.

    Rows are row-major pixels; known pixels have ``settle_k == 0``,
    ``order == -1`` and an empty neighbor list.
    """

    dims: tuple[int, int]
    kernel: KernelSpec
    mode: Order
    min_neighbors: int
    mask_hash: str
    settle_k: np.ndarray
    order: np.ndarray
    indptr: np.ndarray
    seeds: np.ndarray
    version: int = REPLAY_VERSION

    def neighbors(self, x: int, y: int) -> np.ndarray:
        i = y * self.dims[0] + x
        return self.seeds[self.indptr[i]:self.indptr[i + 1]]

    def order_map(self) -> np.ndarray:
        w, h = self.dims
        return self.order.reshape(h, w)

    def seed_smoothing(self, n_seeds: int) -> np.ndarray:
        """Largest growth step at which each seed contributed (1 if never)."""
        rows = np.repeat(self.settle_k, np.diff(self.indptr))
        out = np.ones(n_seeds)
        if self.seeds.size:
            np.maximum.at(out, self.seeds, rows.astype(np.float64))
        return out

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh, version=np.int64(self.version), dims=np.array(self.dims),
                kernel=np.array(self.kernel.family),
                epsilon=np.float64(np.nan if self.kernel.epsilon is None else self.kernel.epsilon),
                mode=np.array(self.mode.value), min_neighbors=np.int64(self.min_neighbors),
                mask_hash=np.array(self.mask_hash), settle_k=self.settle_k, order=self.order,
                indptr=self.indptr, seeds=self.seeds)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReplayLog":
        with np.load(path, allow_pickle=False) as z:
            version = int(z["version"])
            if version != REPLAY_VERSION:
                raise ValueError(f"unsupported replay log version {version}")
            eps = float(z["epsilon"])
            return cls(
                dims=tuple(int(v) for v in z["dims"]),
                kernel=KernelSpec(str(z["kernel"]), None if np.isnan(eps) else eps),
                mode=Order(str(z["mode"])), min_neighbors=int(z["min_neighbors"]),
                mask_hash=str(z["mask_hash"]), settle_k=z["settle_k"], order=z["order"],
                indptr=z["indptr"], seeds=z["seeds"], version=version)


def _row_weights(order_tag, seg, ox, oy, w, n_seg):
    """Pair weights for rows that all use the same consistency order."""
    if order_tag == 0:
        return shepard_weights(seg, w, n_seg), np.zeros(n_seg, dtype=bool)
    return first_order_weights(seg, ox, oy, w, n_seg)


def _make_step(mode: Order, gray: np.ndarray, truth: np.ndarray | None, strict: bool):
    def step(c: Candidates):
        n = len(c)
        f = gray[c.seeds]
        w0, _ = _row_weights(0, c.seg, c.ox, c.oy, c.weights, n)
        u0 = np.bincount(c.seg, w0 * f, n)
        if mode is Order.ZERO:
            return u0, np.zeros(n, dtype=np.int8)
        w1, singular = _row_weights(1, c.seg, c.ox, c.oy, c.weights, n)
        u1 = np.bincount(c.seg, np.nan_to_num(w1) * f, n)
        if mode is Order.FIRST:
            vals = np.where(singular, np.nan if strict else u0, u1)
            return vals, np.where(singular, 0, 1).astype(np.int8)
        t = truth[c.pixels]
        use_first = ~singular & ((t - u1) ** 2 < (t - u0) ** 2)
        return np.where(use_first, u1, u0), use_first.astype(np.int8)
    return step


def inpaint(mask: InpaintingMask, kernel: KernelSpec | None = None, mode=Order.ZERO,
            min_neighbors: int = 5, ground_truth: GrayImage | None = None,
            strict_first_order: bool = False) -> tuple[GrayImage, ReplayLog]:
    """Reconstruct the full image from ``mask``.

    Known pixels keep their mask values.  Influence areas are the Voronoi
    cell sizes, supports start at each point's smoothing length and grow
    linearly until every pixel has enough neighbors.
    """
    kernel = kernel or KernelSpec()
    mode = Order.parse(mode)
    truth = None
    if mode is Order.MIXED:
        if ground_truth is None:
            raise ValueError("mixed order needs the ground-truth image")
        if ground_truth.dims != mask.dims:
            raise ValueError(f"dimension mismatch: mask {mask.dims} vs truth {ground_truth.dims}")
        truth = ground_truth.data.ravel()
    if mode is not Order.ZERO and min_neighbors < 3:
        raise ValueError("first-order reconstruction needs min_neighbors >= 3")
    step = _make_step(mode, mask.gray, truth, strict_first_order)
    res: GrowthResult = grow_until_covered(
        mask, min_neighbors, step, kernel=kernel,
        require_noncollinear=mode is not Order.ZERO)
    w, h = mask.dims
    log = ReplayLog((w, h), kernel, mode, min_neighbors, mask.geometry_hash(),
                    res.settle_k, res.order, res.indptr, res.seeds)
    return GrayImage(res.values.reshape(h, w)), log

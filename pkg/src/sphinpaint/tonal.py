"""Least-squares gray values for a fixed mask (tonal optimization)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import aslinearoperator

from .image import GrayImage
from .inpaint import ReplayLog, _row_weights
from .kernels import KernelSpec
from .mask import InpaintingMask
from .neighbors import kernel_weights

log = logging.getLogger(__name__)


class ReplayMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ReconstructionOperator:
    """Sparse pixels-by-mask-points matrix with frozen modified-kernel weights."""

    matrix: sp.csr_matrix
    dims: tuple[int, int]

    @property
    def shape(self):
        return self.matrix.shape

    def matvec(self, g):
        return self.matrix @ g

    def rmatvec(self, y):
        return self.matrix.T @ y

    def apply(self, g) -> GrayImage:
        w, h = self.dims
        return GrayImage(self.matvec(np.asarray(g, dtype=np.float64)).reshape(h, w))


def assemble_operator(replay: ReplayLog, mask: InpaintingMask, spec: KernelSpec | None = None) -> ReconstructionOperator:
    """Re-evaluate the weights recorded by an inpainting run.

    Known pixels become unit rows selecting their own mask point.
    """
    spec = spec or replay.kernel
    if mask.geometry_hash() != replay.mask_hash or tuple(mask.dims) != tuple(replay.dims):
        raise ReplayMismatch("replay log was recorded for a different mask")
    if spec != replay.kernel:
        raise ReplayMismatch(f"replay log was recorded with {replay.kernel}, not {spec}")
    w, h = mask.dims
    n = w * h
    counts = np.diff(replay.indptr)
    rows = np.repeat(np.arange(n), counts)
    seeds = replay.seeds.astype(np.int64)
    k = replay.settle_k[rows].astype(np.int64)
    ox = rows % w - mask.xs[seeds]
    oy = rows // w - mask.ys[seeds]
    areas = mask.areas
    vals = np.empty(seeds.size)
    for tag in (0, 1):
        row_sel = np.flatnonzero((replay.order == tag) & (counts > 0))
        if row_sel.size == 0:
            continue
        pair_sel = np.flatnonzero(replay.order[rows] == tag)
        seg = np.repeat(np.arange(row_sel.size), counts[row_sel])
        ps = pair_sel
        wts = kernel_weights(mask, spec, areas, seeds[ps], ox[ps], oy[ps], k[ps])
        rw, singular = _row_weights(tag, seg, ox[pair_sel], oy[pair_sel], wts, row_sel.size)
        if singular.any():
            raise ReplayMismatch("replayed first-order system is singular")
        vals[pair_sel] = rw
    known = mask.flat
    all_rows = np.concatenate([rows, known])
    all_cols = np.concatenate([seeds, np.arange(len(mask))])
    all_vals = np.concatenate([vals, np.ones(len(mask))])
    order = np.lexsort((all_cols, all_rows))
    mat = sp.csr_matrix((all_vals[order], all_cols[order],
                         np.concatenate([[0], np.cumsum(np.bincount(all_rows, minlength=n))])),
                        shape=(n, len(mask)))
    return ReconstructionOperator(mat, (w, h))


@dataclass
class CgnrResult:
    g: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = False
    tol: float = 1e-8

    @property
    def relative_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def cgnr(op, f, tol: float = 1e-8, max_iter: int | None = None) -> CgnrResult:
    """Conjugate gradients on the normal equations ``A^T A g = A^T f``.

    Only products with ``A`` and ``A^T`` are formed.  Starts from zero and
    stops once ``|A^T (f - A g)| <= tol * |A^T f|``.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    A = op if hasattr(op, "rmatvec") else aslinearoperator(op)
    f = np.asarray(f, dtype=np.float64).ravel()
    n = A.shape[1]
    if max_iter is None:
        max_iter = 10 * n
    g = np.zeros(n)
    r = f.copy()
    z = A.rmatvec(r)
    norm_b = np.linalg.norm(z)
    res = CgnrResult(g, 0, [], False, tol)
    if norm_b == 0:
        res.converged = True
        res.residuals.append(0.0)
        return res
    p = z.copy()
    zz = z @ z
    res.residuals.append(np.sqrt(zz) / norm_b)
    for it in range(1, max_iter + 1):
        wv = A.matvec(p)
        ww = wv @ wv
        if ww == 0:
            break
        alpha = zz / ww
        g += alpha * p
        r -= alpha * wv
        z = A.rmatvec(r)
        zz_new = z @ z
        res.iterations = it
        res.residuals.append(np.sqrt(zz_new) / norm_b)
        if res.residuals[-1] <= tol:
            res.converged = True
            break
        p = z + (zz_new / zz) * p
        zz = zz_new
    if not res.converged:
        log.warning("CGNR stopped after %d iterations at relative residual %.3e",
                    res.iterations, res.relative_residual)
    return res


def cgnr_solve(op, f: GrayImage | np.ndarray, tol: float = 1e-8, max_iter: int | None = None) -> np.ndarray:
    data = f.data if isinstance(f, GrayImage) else f
    return cgnr(op, data, tol, max_iter).g


def tonal_optimize(f: GrayImage, mask: InpaintingMask, replay: ReplayLog, spec: KernelSpec | None = None,
                   tol: float = 1e-8, max_iter: int | None = None):
    """Optimal gray values under the frozen operator.

    Returns the mask carrying the new values, the reconstruction ``A g``
    and the solver record.
    """
    op = assemble_operator(replay, mask, spec)
    res = cgnr(op, f.data, tol, max_iter)
    return mask.with_gray(res.g), op.apply(res.g), res

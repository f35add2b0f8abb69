"""Greedy Voronoi-based mask densification."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .image import GrayImage, mse
from .inpaint import Order, inpaint
from .kernels import KernelSpec
from .mask import InpaintingMask, make_rng
from .voronoi import cell_errors, distance_transform

log = logging.getLogger(__name__)

Reconstruct = Callable[[InpaintingMask], GrayImage]


@dataclass
class DensifyConfig:
    target_density: float
    points_per_iter: int = 1
    min_neighbors: int = 5
    rng_seed: int = 0
    mode: Order = Order.MIXED
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if not 0 < self.target_density <= 1:
            raise ValueError("target density must lie in (0, 1]")
        if self.points_per_iter < 1:
            raise ValueError("points_per_iter must be >= 1")
        self.mode = Order.parse(self.mode)

    def target_count(self, n_pixels: int) -> int:
        return int(math.floor(self.target_density * n_pixels + 1e-9))


@dataclass
class DensifyResult:
    mask: InpaintingMask
    reconstruction: GrayImage
    history: list[tuple[int, int, float]]

    def write_history(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iteration,points,mse\n")
            for it, pts, err in self.history:
                fh.write(f"{it},{pts},{err:.6f}\n")


def initial_mask(f: GrayImage, count: int, rng_seed: int) -> InpaintingMask:
    n = f.size
    flat = np.sort(make_rng(rng_seed).choice(n, size=count, replace=False))
    ys, xs = np.divmod(flat, f.width)
    return InpaintingMask(f.dims, xs, ys, f.data[ys, xs])


def worst_pixels(mask: InpaintingMask, f: GrayImage, u: GrayImage, count: int) -> np.ndarray:
    """Flat indices of new points: the worst pixel of each of the worst cells.

    Cells are ranked by summed squared error (lowest seed index first on
    ties); inside a cell the first maximum in row-major order wins.  Mask
    pixels are never candidates, so cells consisting of their seed alone
    are skipped.
    """
    diagram = distance_transform(mask)
    cells, e = cell_errors(diagram, f, u)
    e = e.ravel().copy()
    e[mask.flat] = -1.0
    label = diagram.label.ravel()
    flat = np.arange(e.size)
    order = np.lexsort((flat, -e, label))
    first = np.ones(order.size, dtype=bool)
    first[1:] = label[order[1:]] != label[order[:-1]]
    best = np.full(cells.size, -1, dtype=np.int64)
    best[label[order[first]]] = order[first]
    valid = e[best] >= 0
    ranked = np.argsort(-cells, kind="stable")
    ranked = ranked[valid[ranked]]
    return best[ranked[:count]]


def densify(f: GrayImage, cfg: DensifyConfig, reconstruct: Reconstruct | None = None,
            progress: Callable[[int, int, float], None] | None = None) -> DensifyResult:
    """Insert mask points one Voronoi cell at a time until the target density.

    ``reconstruct`` defaults to SPH inpainting with the configured kernel,
    order and neighbor count; the diffusion baselines can be plugged in
    instead.
    """
    target = cfg.target_count(f.size)
    start = cfg.min_neighbors
    if target <= start:
        raise ValueError(f"target of {target} points does not exceed the {start} initial points")
    if reconstruct is None:
        def reconstruct(m):
            return inpaint(m, cfg.kernel, cfg.mode, cfg.min_neighbors, f)[0]

    mask = initial_mask(f, start, cfg.rng_seed)
    u = reconstruct(mask)
    history = [(0, len(mask), mse(f, u))]
    it = 0
    while len(mask) < target:
        it += 1
        need = min(cfg.points_per_iter, target - len(mask))
        new = worst_pixels(mask, f, u, need)
        if new.size == 0:
            log.warning("no free pixel left to insert at %d points", len(mask))
            break
        ys, xs = np.divmod(new, f.width)
        mask = mask.extended(xs, ys, f)
        u = reconstruct(mask)
        history.append((it, len(mask), mse(f, u)))
        if progress is not None:
            progress(*history[-1])
    return DensifyResult(mask, u, history)

"""Inpainting masks: ordered sets of known pixels with per-point payloads."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .image import FormatError, GrayImage, read_pgm, write_pgm

KNOWN_THRESHOLD = 128


@dataclass(frozen=True)
class MaskPoint:
    x: int
    y: int
    gray: float
    area: float
    smoothing: float
    tensor: np.ndarray | None = None


class InpaintingMask:
    """Mask points stored column-wise.

    ``xs``/``ys`` are pixel coordinates, ``gray`` the stored intensity,
    ``smoothing`` the initial smoothing length and ``tensors`` an (n, 2, 2)
    array whose entries are NaN for isotropic points.  Point order is
    significant: it is the seed index used everywhere else.
    """

    def __init__(self, dims, xs, ys, gray, smoothing=None, tensors=None):
        self.width, self.height = (int(d) for d in dims)
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid dimensions {dims}")
        self.xs = np.asarray(xs, dtype=np.int64).ravel().copy()
        self.ys = np.asarray(ys, dtype=np.int64).ravel().copy()
        self.gray = np.asarray(gray, dtype=np.float64).ravel().copy()
        n = self.xs.size
        if n == 0:
            raise ValueError("empty mask")
        if self.ys.size != n or self.gray.size != n:
            raise ValueError("coordinate and gray arrays differ in length")
        if (self.xs.min() < 0 or self.xs.max() >= self.width
                or self.ys.min() < 0 or self.ys.max() >= self.height):
            raise ValueError("mask point outside the image")
        self.smoothing = (np.ones(n) if smoothing is None
                          else np.asarray(smoothing, dtype=np.float64).ravel().copy())
        if self.smoothing.size != n or np.any(self.smoothing < 1):
            raise ValueError("smoothing lengths must be >= 1, one per point")
        self.tensors = (np.full((n, 2, 2), np.nan) if tensors is None
                        else np.asarray(tensors, dtype=np.float64).reshape(n, 2, 2).copy())
        flat = self.ys * self.width + self.xs
        if np.unique(flat).size != n:
            raise ValueError("duplicate mask point positions")
        for arr in (self.xs, self.ys, self.gray, self.smoothing, self.tensors):
            arr.flags.writeable = False

    # --- basic views -------------------------------------------------------

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    def __len__(self) -> int:
        return self.xs.size

    @property
    def density(self) -> float:
        return len(self) / (self.width * self.height)

    @cached_property
    def flat(self) -> np.ndarray:
        """Row-major pixel index of every point."""
        return self.ys * self.width + self.xs

    @cached_property
    def index_grid(self) -> np.ndarray:
        """(height, width) grid holding the point index, -1 where unknown."""
        grid = np.full((self.height, self.width), -1, dtype=np.int64)
        grid[self.ys, self.xs] = np.arange(len(self))
        grid.flags.writeable = False
        return grid

    @property
    def occupancy(self) -> np.ndarray:
        return self.index_grid >= 0

    @cached_property
    def anisotropic(self) -> np.ndarray:
        return ~np.isnan(self.tensors[:, 0, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        """Voronoi cell sizes (influence areas)."""
        from .voronoi import distance_transform
        return distance_transform(self).area

    @property
    def points(self) -> list[MaskPoint]:
        areas = self.areas
        return [
            MaskPoint(int(x), int(y), float(g), float(a), float(h),
                      None if np.isnan(t[0, 0]) else t.copy())
            for x, y, g, a, h, t in zip(self.xs, self.ys, self.gray, areas,
                                        self.smoothing, self.tensors)
        ]

    def geometry_hash(self) -> str:
        """Digest of everything that determines the reconstruction operator."""
        h = hashlib.sha256()
        h.update(np.array([self.width, self.height], dtype=np.int64).tobytes())
        h.update(self.xs.tobytes())
        h.update(self.ys.tobytes())
        h.update(self.smoothing.tobytes())
        h.update(np.nan_to_num(self.tensors, nan=-1.0).tobytes())
        return h.hexdigest()

    # --- derived masks -----------------------------------------------------

    def _replace(self, **kw) -> "InpaintingMask":
        args = dict(dims=self.dims, xs=self.xs, ys=self.ys, gray=self.gray,
                    smoothing=self.smoothing, tensors=self.tensors)
        args.update(kw)
        return InpaintingMask(**args)

    def with_gray(self, gray) -> "InpaintingMask":
        return self._replace(gray=gray)

    def with_gray_from(self, img: GrayImage) -> "InpaintingMask":
        _check_dims(self.dims, img)
        return self._replace(gray=img.data[self.ys, self.xs])

    def with_smoothing(self, smoothing) -> "InpaintingMask":
        return self._replace(smoothing=smoothing)

    def with_tensors(self, tensors) -> "InpaintingMask":
        return self._replace(tensors=tensors)

    def isotropic(self) -> "InpaintingMask":
        return self._replace(tensors=None)

    def extended(self, xs, ys, img: GrayImage) -> "InpaintingMask":
        """Append isotropic points taking their gray values from ``img``."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        n = xs.size
        return InpaintingMask(
            self.dims,
            np.concatenate([self.xs, xs]), np.concatenate([self.ys, ys]),
            np.concatenate([self.gray, img.data[ys, xs]]),
            np.concatenate([self.smoothing, np.ones(n)]),
            np.concatenate([self.tensors, np.full((n, 2, 2), np.nan)]),
        )

    def known_image(self, fill: float = 0.0) -> np.ndarray:
        out = np.full((self.height, self.width), float(fill))
        out[self.ys, self.xs] = self.gray
        return out

    def to_image(self) -> GrayImage:
        """Binary mask image: 255 at mask points, 0 elsewhere."""
        return GrayImage(np.where(self.occupancy, 255.0, 0.0))

    def __eq__(self, other):
        if not isinstance(other, InpaintingMask):
            return NotImplemented
        return (self.dims == other.dims
                and np.array_equal(self.xs, other.xs) and np.array_equal(self.ys, other.ys)
                and np.array_equal(self.gray, other.gray)
                and np.array_equal(self.smoothing, other.smoothing)
                and np.array_equal(self.tensors, other.tensors, equal_nan=True))

    __hash__ = None

    def __repr__(self):
        return (f"InpaintingMask({self.width}x{self.height}, points={len(self)}, "
                f"density={self.density:.4%})")


def _check_dims(dims, img: GrayImage) -> None:
    if tuple(dims) != img.dims:
        raise ValueError(f"dimension mismatch: mask {tuple(dims)} vs image {img.dims}")


def _from_flat(dims, flat: np.ndarray, img: GrayImage) -> InpaintingMask:
    _check_dims(dims, img)
    w = dims[0]
    ys, xs = np.divmod(np.asarray(flat, dtype=np.int64), w)
    return InpaintingMask(dims, xs, ys, img.data[ys, xs])


# --- generators ------------------------------------------------------------

def regular_count(dims, grid_step: int) -> int:
    w, h = dims
    return math.ceil(w / grid_step) * math.ceil(h / grid_step)


def make_regular_mask(dims, grid_step: int, img: GrayImage) -> InpaintingMask:
    """Pixels ``(i*step, j*step)`` starting at the origin."""
    grid_step = int(grid_step)
    if grid_step < 1:
        raise ValueError("grid step must be >= 1")
    w, h = dims
    ys, xs = np.meshgrid(np.arange(0, h, grid_step), np.arange(0, w, grid_step), indexing="ij")
    return _from_flat(dims, (ys * w + xs).ravel(), img)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator used for every random choice in the package."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def make_random_mask(dims, density: float, rng_seed: int, img: GrayImage) -> InpaintingMask:
    """``floor(density * w * h)`` distinct pixels drawn uniformly without replacement."""
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    w, h = dims
    n = w * h
    count = int(math.floor(density * n + 1e-9))
    if count < 1:
        raise ValueError(f"density {density} selects no pixels on a {w}x{h} image")
    flat = make_rng(rng_seed).choice(n, size=count, replace=False)
    return _from_flat(dims, np.sort(flat), img)


def mask_from_image(dims, maskfile: GrayImage, damaged: GrayImage) -> InpaintingMask:
    """Pixels with mask value >= 128 are known and keep the damaged image's value."""
    _check_dims(dims, maskfile)
    _check_dims(dims, damaged)
    flat = np.flatnonzero(maskfile.data.ravel() >= KNOWN_THRESHOLD)
    if flat.size == 0:
        raise ValueError("empty mask: no pixel is marked known")
    return _from_flat(dims, flat, damaged)


# --- persistence -----------------------------------------------------------

def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".gray.txt")


def tensor_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".tensor.txt")


def write_mask(mask: InpaintingMask, path: str | os.PathLike) -> None:
    """Binary mask PGM plus ``.gray.txt`` (``x y gray``) in point order.

    Non-default smoothing lengths and tensors go to ``.tensor.txt`` as
    ``index h g11 g12 g22`` lines.
    """
    write_pgm(mask.to_image(), path)
    with open(sidecar_path(path), "w", encoding="utf-8", newline="\n") as fh:
        for x, y, g in zip(mask.xs, mask.ys, mask.gray):
            fh.write(f"{x} {y} {float(g)!r}\n")
    extra = np.flatnonzero(mask.anisotropic | (mask.smoothing != 1))
    tp = tensor_path(path)
    if extra.size:
        with open(tp, "w", encoding="utf-8", newline="\n") as fh:
            for i in extra:
                t = mask.tensors[i]
                fh.write(f"{i} {float(mask.smoothing[i])!r} {float(t[0, 0])!r} "
                         f"{float(t[0, 1])!r} {float(t[1, 1])!r}\n")
    elif tp.exists():
        tp.unlink()


def read_mask(path: str | os.PathLike) -> InpaintingMask:
    img = read_pgm(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"missing gray-value sidecar {side}")
    xs, ys, gray = [], [], []
    with open(side, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{side}:{lineno}: expected 'x y gray'")
            try:
                xs.append(int(parts[0]))
                ys.append(int(parts[1]))
                gray.append(float(parts[2]))
            except ValueError:
                raise FormatError(f"{side}:{lineno}: malformed entry {line.strip()!r}") from None
    grid = img.data >= KNOWN_THRESHOLD
    if not xs:
        if grid.any():
            raise FormatError(f"{side} is empty but {path} marks {int(grid.sum())} known pixels")
        raise FormatError(f"{path}: empty mask")
    try:
        mask = InpaintingMask(img.dims, xs, ys, gray)
    except ValueError as exc:
        raise FormatError(f"{side}: {exc}") from None
    if not np.array_equal(mask.occupancy, grid):
        raise FormatError(f"{side} does not match the known pixels of {path}")
    tp = tensor_path(path)
    if tp.exists():
        smoothing = mask.smoothing.copy()
        tensors = mask.tensors.copy()
        with open(tp, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 5:
                    raise FormatError(f"{tp}:{lineno}: expected 'index h g11 g12 g22'")
                i = int(parts[0])
                if not 0 <= i < len(mask):
                    raise FormatError(f"{tp}:{lineno}: point index {i} out of range")
                smoothing[i] = float(parts[1])
                g11, g12, g22 = (float(p) for p in parts[2:])
                tensors[i] = [[g11, g12], [g12, g22]]
        mask = mask._replace(smoothing=smoothing, tensors=tensors)
    return mask

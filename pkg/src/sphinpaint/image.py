"""Grayscale image container, PGM input/output and error metrics."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class FormatError(ValueError):
    """Raised for malformed or unsupported PGM data."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class GrayImage:
    """Dense grid of real intensities, indexed ``data[y, x]``.

    Values are kept as float64 and are allowed to leave [0, 255]; clamping
    only happens when writing a file.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        """(width, height)"""
        return self.width, self.height

    @property
    def size(self) -> int:
        return self.data.size

    def __getitem__(self, xy):
        x, y = xy
        return float(self.data[y, x])

    @classmethod
    def constant(cls, width: int, height: int, value: float) -> "GrayImage":
        return cls(np.full((height, width), float(value)))

    def quantized(self) -> np.ndarray:
        """Bytes as they would be written to a P5 file."""
        return quantize(self.data)


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half away from zero, then clamp to [0, 255]."""
    v = np.asarray(values, dtype=np.float64)
    rounded = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, start, end) of the next header token, skipping comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("unexpected end of header", pos)
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], start, pos


def _header_int(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, start, end = _next_token(buf, pos)
    if not tok.isdigit():
        raise FormatError(f"invalid {what} {tok!r}", start)
    return int(tok), end


def parse_pgm(buf: bytes) -> GrayImage:
    if len(buf) < 2:
        raise FormatError("file too short for a PGM header", 0)
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"unsupported magic {magic!r}, expected P2 or P5", 0)
    pos = 2
    width, pos = _header_int(buf, pos, "width")
    height, pos = _header_int(buf, pos, "height")
    maxval_start = pos
    maxval, pos = _header_int(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}", maxval_start)
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported maxval {maxval}", maxval_start)
    count = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(buf) or not buf[pos:pos + 1].isspace():
            raise FormatError("missing whitespace after maxval", pos)
        pos += 1
        payload = buf[pos:pos + count]
        if len(payload) < count:
            raise FormatError(
                f"truncated payload: expected {count} bytes, got {len(payload)}", pos + len(payload))
        values = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
        bad = np.flatnonzero(values > maxval)
        if bad.size:
            raise FormatError(f"sample {int(values[bad[0]])} exceeds maxval {maxval}", pos + int(bad[0]))
    else:
        values = np.empty(count)
        for i in range(count):
            try:
                tok, start, pos = _next_token(buf, pos)
            except FormatError as exc:
                raise FormatError(f"truncated payload: expected {count} samples, got {i}", exc.offset) from None
            if not tok.isdigit():
                raise FormatError(f"invalid sample {tok!r}", start)
            v = int(tok)
            if v > maxval:
                raise FormatError(f"sample {v} exceeds maxval {maxval}", start)
            values[i] = v
    return GrayImage(values.reshape(height, width))


def read_pgm(path: str | os.PathLike) -> GrayImage:
    """Read a binary (P5) or ASCII (P2) graymap with maxval <= 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return parse_pgm(buf)


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.quantized().tobytes()


def write_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def _check_same_dims(a: GrayImage, b: GrayImage) -> None:
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")


def mse(a: GrayImage, b: GrayImage) -> float:
    """Mean squared error on the unclamped values."""
    _check_same_dims(a, b)
    d = a.data - b.data
    return float(np.mean(d * d))


def mse_clamped(a: GrayImage, b: GrayImage) -> float:
    """MSE after quantizing both images the way ``write_pgm`` would."""
    _check_same_dims(a, b)
    d = a.quantized().astype(np.float64) - b.quantized().astype(np.float64)
    return float(np.mean(d * d))

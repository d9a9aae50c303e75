"""Elevation grids, masks, confidence maps, and their on-disk formats.

Two formats cover everything the pipeline persists:

* CFDR: little-endian binary raster. 18-byte header (magic ``CFDR``,
  version u16, width u32, height u32, nodata f32) followed by
  width*height float32 samples, row-major, top row first. Version 1 is a
  single-channel grid; version 2 prepends a u32 channel count to the
  payload and stores that many channels sequentially (used for texture
  stacks).
* PGM: binary P5, maxval 255. Masks are strict {0, 255}; hillshade
  previews use the full gray range.

Round-trips are bit-exact: no value may be NaN/Inf, missing pixels carry
the grid's nodata sentinel instead.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

CFDR_MAGIC = b"CFDR"
CFDR_VERSION_GRID = 1
CFDR_VERSION_STACK = 2
_HEADER = struct.Struct("<4sHIIf")  # magic, version, width, height, nodata


@dataclass(frozen=True, eq=False)
class DemGrid:
    """Single-channel elevation raster with an explicit nodata sentinel."""

    values: np.ndarray  # (height, width) float32, finite everywhere
    nodata: float

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.dtype != np.float32:
            raise DataError(f"DemGrid values must be 2-D float32, got {v.dtype} {v.shape}")
        if not math.isfinite(self.nodata):
            raise DataError("nodata sentinel must be finite")
        bad = ~np.isfinite(v)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataError(f"non-finite elevation at row {r}, col {c}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def valid_mask(self) -> np.ndarray:
        """Boolean array, True where the pixel holds real data."""
        return self.values != np.float32(self.nodata)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DemGrid)
            and np.float32(self.nodata) == np.float32(other.nodata)
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """Binary {0,1} raster aligned to some DemGrid."""

    values: np.ndarray  # (height, width) uint8 in {0,1}

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.dtype != np.uint8:
            raise DataError(f"MaskGrid values must be 2-D uint8, got {v.dtype} {v.shape}")
        if v.size and v.max() > 1:
            raise DataError("mask values must be 0 or 1")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def popcount(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, MaskGrid) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class ConfidenceGrid:
    """Continuous [0,1] raster, one confidence per pixel."""

    values: np.ndarray  # (height, width) float32

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.dtype != np.float32:
            raise DataError(f"ConfidenceGrid values must be 2-D float32, got {v.dtype} {v.shape}")
        if v.size and (not np.isfinite(v).all() or v.min() < 0.0 or v.max() > 1.0):
            raise DataError("confidence values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfidenceGrid) and np.array_equal(self.values, other.values)


# ---------------------------------------------------------------------------
# CFDR
# ---------------------------------------------------------------------------


def _read_header(data: bytes, path) -> tuple[int, int, int, float]:
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, width, height, nodata = _HEADER.unpack_from(data)
    if magic != CFDR_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {CFDR_MAGIC!r}")
    return version, width, height, nodata


def _payload(data: bytes, offset: int, count: int, path) -> np.ndarray:
    need = count * 4
    got = len(data) - offset
    if got < need:
        raise DataError(f"{path}: truncated payload, expected {need} bytes, got {got}")
    if got > need:
        raise DataError(f"{path}: {got - need} trailing bytes after payload")
    return np.frombuffer(data, dtype="<f4", offset=offset, count=count)


def read_dem(path) -> DemGrid:
    """Read a version-1 CFDR file into a DemGrid."""
    with open(path, "rb") as fh:
        data = fh.read()
    version, width, height, nodata = _read_header(data, path)
    if version != CFDR_VERSION_GRID:
        raise DataError(f"{path}: unsupported CFDR version {version} for a grid")
    flat = _payload(data, _HEADER.size, width * height, path)
    bad = ~np.isfinite(flat)
    if bad.any():
        i = int(np.argmax(bad))
        raise DataError(f"{path}: non-finite value at row {i // max(width, 1)}, col {i % max(width, 1)}")
    values = flat.reshape(height, width).copy()
    return DemGrid(values=values, nodata=float(np.float32(nodata)))


def write_dem(grid: DemGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CFDR_MAGIC, CFDR_VERSION_GRID, grid.width, grid.height, grid.nodata))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def read_confidence(path) -> ConfidenceGrid:
    grid = read_dem(path)
    return ConfidenceGrid(values=grid.values)


def write_confidence(conf: ConfidenceGrid, path) -> None:
    # nodata slot is meaningless for confidences; -1 is never a valid value
    write_dem(DemGrid(values=conf.values, nodata=-1.0), path)


def read_stack(path) -> tuple[np.ndarray, float]:
    """Read a version-2 CFDR stack. Returns ((H, W, C) float32, nodata)."""
    with open(path, "rb") as fh:
        data = fh.read()
    version, width, height, nodata = _read_header(data, path)
    if version != CFDR_VERSION_STACK:
        raise DataError(f"{path}: unsupported CFDR version {version} for a stack")
    if len(data) < _HEADER.size + 4:
        raise DataError(f"{path}: truncated channel count")
    (channels,) = struct.unpack_from("<I", data, _HEADER.size)
    flat = _payload(data, _HEADER.size + 4, width * height * channels, path)
    if not np.isfinite(flat).all():
        i = int(np.argmax(~np.isfinite(flat)))
        raise DataError(f"{path}: non-finite value at flat index {i}")
    return flat.reshape(channels, height, width).transpose(1, 2, 0).copy(), float(np.float32(nodata))


def write_stack(stack: np.ndarray, path, nodata: float = 0.0) -> None:
    if stack.ndim != 3:
        raise DataError(f"stack must be (H, W, C), got {stack.shape}")
    h, w, c = stack.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CFDR_MAGIC, CFDR_VERSION_STACK, w, h, nodata))
        fh.write(struct.pack("<I", c))
        fh.write(np.ascontiguousarray(stack.transpose(2, 0, 1), dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def _parse_pgm(data: bytes, path) -> np.ndarray:
    if data[:2] != b"P5":
        raise DataError(f"{path}: not a binary P5 PGM")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # '#' starts a comment running to end of line
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise DataError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise DataError(f"{path}: maxval must be 255, got {maxval}")
    need = width * height
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise DataError(f"{path}: truncated PGM payload")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def read_gray(path) -> np.ndarray:
    """Read a P5 PGM as a raw uint8 image (any gray values)."""
    with open(path, "rb") as fh:
        return _parse_pgm(fh.read(), path).copy()


def write_gray(image: np.ndarray, path) -> None:
    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataError(f"gray image must be 2-D uint8, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


def read_mask(path) -> MaskGrid:
    """Read a strict binary mask: pixel 0 -> 0, 255 -> 1, anything else rejected."""
    img = read_gray(path)
    gray = (img != 0) & (img != 255)
    if gray.any():
        r, c = np.argwhere(gray)[0]
        raise DataError(f"{path}: intermediate gray value {img[r, c]} at row {r}, col {c}")
    return MaskGrid(values=(img == 255).astype(np.uint8))


def write_mask(mask: MaskGrid, path) -> None:
    write_gray((mask.values * np.uint8(255)), path)


# ---------------------------------------------------------------------------
# Hillshade preview (Horn's method, gdaldem conventions)
# ---------------------------------------------------------------------------


def hillshade(grid: DemGrid, azimuth: float = 315.0, altitude: float = 45.0,
              z_factor: float = 1.0) -> np.ndarray:
    """Render an 8-bit shaded-relief preview of an elevation grid.

    Slope and aspect come from the 3x3 Horn stencil; illumination is
    ``sin(alt)*cos(slope) + cos(alt)*sin(slope)*cos(az - aspect)``, clamped
    to [0,1] and scaled to [1,254]. Pixels whose neighborhood is incomplete
    (image border) or touches nodata emit 0.
    """
    if grid.width < 3 or grid.height < 3:
        raise DataError(f"hillshade needs at least 3x3, got {grid.height}x{grid.width}")
    z = grid.values.astype(np.float64)
    ok = sliding_window_view(grid.valid_mask(), (3, 3)).all(axis=(-2, -1))

    nw, n, ne = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    w_, e = z[1:-1, :-2], z[1:-1, 2:]
    sw, s, se = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    # row index grows southward, column index grows eastward
    p = ((ne + 2.0 * e + se) - (nw + 2.0 * w_ + sw)) / 8.0  # dz/dx toward east
    q = ((nw + 2.0 * n + ne) - (sw + 2.0 * s + se)) / 8.0  # dz/dy toward north

    slope = np.arctan(z_factor * np.hypot(p, q))
    aspect = np.arctan2(-p, -q)  # downslope direction, clockwise from north
    az = math.radians(azimuth)
    alt = math.radians(altitude)
    shade = math.sin(alt) * np.cos(slope) + math.cos(alt) * np.sin(slope) * np.cos(az - aspect)
    scaled = np.rint(1.0 + 253.0 * np.clip(shade, 0.0, 1.0))

    out = np.zeros((grid.height, grid.width), dtype=np.uint8)
    out[1:-1, 1:-1] = np.where(ok, scaled, 0.0).astype(np.uint8)
    return out

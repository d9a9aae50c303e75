"""Strip accumulation, motion masks, mask clipping, and mask application.

Strips are pre-aligned full-region rasters: pixels outside a strip's
footprint carry the shared nodata sentinel. A mosaic at timestep t holds,
per pixel, the most recent valid observation at or before t.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import DemGrid, MaskGrid, read_dem


@dataclass(frozen=True)
class StripSequence:
    """Time-ordered strips over one region frame."""

    strips: tuple[tuple[int, DemGrid], ...]  # (timestep, grid), timesteps strictly increasing

    def __post_init__(self):
        if not self.strips:
            raise DataError("empty strip sequence")
        t0, g0 = self.strips[0]
        prev = t0
        for t, g in self.strips[1:]:
            if t <= prev:
                raise DataError(f"timesteps not strictly increasing at t={t}")
            prev = t
        for t, g in self.strips:
            if (g.width, g.height) != (g0.width, g0.height):
                raise DataError(f"strip at t={t} has mismatched dimensions")
            if np.float32(g.nodata) != np.float32(g0.nodata):
                raise DataError(f"strip at t={t} has mismatched nodata sentinel")

    @property
    def nodata(self) -> float:
        return self.strips[0][1].nodata

    @property
    def shape(self) -> tuple[int, int]:
        g = self.strips[0][1]
        return g.values.shape


def _check_dims(a, b, what: str) -> None:
    if a.values.shape != b.values.shape:
        raise DataError(f"{what}: dimension mismatch {a.values.shape} vs {b.values.shape}")


def accumulate(seq: StripSequence) -> list[DemGrid]:
    """One mosaic per timestep: latest valid observation wins, else nodata."""
    nodata = np.float32(seq.nodata)
    running = np.full(seq.shape, nodata, dtype=np.float32)
    out = []
    for _, grid in seq.strips:
        fresh = grid.valid_mask()
        running = np.where(fresh, grid.values, running)
        out.append(DemGrid(values=running.copy(), nodata=seq.nodata))
    return out


def motion_mask(prev_mosaic: DemGrid, strip: DemGrid) -> MaskGrid:
    """1 exactly where the strip carries data at this timestep.

    A strip re-observing an unchanged elevation still counts as updated;
    the mask gates on strip membership, not on value change.
    """
    _check_dims(prev_mosaic, strip, "motion_mask")
    return MaskGrid(values=strip.valid_mask().astype(np.uint8))


def clip_mask(overdrawn: MaskGrid, motion: MaskGrid) -> MaskGrid:
    """Pixelwise product; clips an overdrawn mask to the strip footprint."""
    _check_dims(overdrawn, motion, "clip_mask")
    return MaskGrid(values=overdrawn.values * motion.values)


def apply_mask(strip: DemGrid, cloud: MaskGrid) -> DemGrid:
    """Remove detected artifacts: masked pixels become nodata."""
    _check_dims(strip, cloud, "apply_mask")
    values = np.where(cloud.values == 1, np.float32(strip.nodata), strip.values)
    return DemGrid(values=values, nodata=strip.nodata)


# ---------------------------------------------------------------------------
# Strip manifests: one line per strip, "<timestep> <path-to-CFDR>"
# ---------------------------------------------------------------------------


def read_manifest(path) -> StripSequence:
    base = os.path.dirname(os.path.abspath(path))
    strips = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected '<timestep> <path>'")
            try:
                t = int(parts[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad timestep {parts[0]!r}") from None
            strip_path = parts[1]
            if not os.path.isabs(strip_path):
                strip_path = os.path.join(base, strip_path)
            strips.append((t, read_dem(strip_path)))
    return StripSequence(strips=tuple(strips))


def write_manifest(entries: list[tuple[int, str]], path) -> None:
    """entries: (timestep, path relative to the manifest's directory)."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, rel in entries:
            fh.write(f"{t} {rel}\n")

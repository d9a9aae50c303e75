"""Fixed-size overlapping patches and seam-aware reassembly.

Patch origins follow the stride lattice {0, s, 2s, ...} with the last
origin clamped to dim - patch so the final patch sits flush with the
border. Stitching resolves overlaps by nearest patch center, which keeps
the winning prediction as far from its patch border as possible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from . import raster


@dataclass(frozen=True)
class PatchSpec:
    patch: int = 224
    overlap: int = 50

    def __post_init__(self):
        if not (0 < self.overlap < self.patch):
            raise DataError(f"need 0 < overlap < patch, got overlap={self.overlap} patch={self.patch}")

    @property
    def stride(self) -> int:
        return self.patch - self.overlap


@dataclass(frozen=True)
class Patch:
    ox: int  # column of the patch's left edge in the parent frame
    oy: int  # row of the patch's top edge
    values: np.ndarray  # (patch, patch)


@dataclass(frozen=True)
class PatchSet:
    patches: tuple[Patch, ...]
    parent_width: int
    parent_height: int
    spec: PatchSpec


def origins(dim: int, spec: PatchSpec) -> list[int]:
    """Stride-lattice origins along one axis, end-clamped to dim - patch."""
    if dim < spec.patch:
        raise DataError(f"dimension {dim} smaller than patch {spec.patch}")
    out = list(range(0, dim - spec.patch + 1, spec.stride))
    if out[-1] != dim - spec.patch:
        out.append(dim - spec.patch)
    return out


def split(values: np.ndarray, spec: PatchSpec) -> PatchSet:
    if values.ndim != 2:
        raise DataError(f"split expects a 2-D array, got {values.shape}")
    h, w = values.shape
    xs = origins(w, spec)
    ys = origins(h, spec)
    patches = tuple(
        Patch(ox=x, oy=y, values=values[y : y + spec.patch, x : x + spec.patch].copy())
        for y in ys
        for x in xs
    )
    return PatchSet(patches=patches, parent_width=w, parent_height=h, spec=spec)


def filter_cloudy(dem_set: PatchSet, mask_set: PatchSet) -> list[tuple[Patch, Patch]]:
    """Keep only patch pairs whose mask contains at least one cloud pixel."""
    same_layout = (
        dem_set.parent_width == mask_set.parent_width
        and dem_set.parent_height == mask_set.parent_height
        and dem_set.spec == mask_set.spec
        and len(dem_set.patches) == len(mask_set.patches)
        and all(
            (d.ox, d.oy) == (m.ox, m.oy)
            for d, m in zip(dem_set.patches, mask_set.patches)
        )
    )
    if not same_layout:
        raise DataError("filter_cloudy: patch sets are not aligned")
    return [
        (d, m)
        for d, m in zip(dem_set.patches, mask_set.patches)
        if int(m.values.sum()) >= 1
    ]


def stitch(patchset: PatchSet) -> np.ndarray:
    """Reassemble patches into the parent frame.

    Each output pixel takes its value from the covering patch whose center
    is nearest; ties go to the patch with the smaller origin in row-major
    order (the iteration order below, with strict-improvement replacement).
    """
    spec = patchset.spec
    h, w = patchset.parent_height, patchset.parent_width
    expected = {(x, y) for y in origins(h, spec) for x in origins(w, spec)}
    got = {(p.ox, p.oy) for p in patchset.patches}
    if got != expected:
        raise DataError("stitch: patch origins inconsistent with the split lattice")
    for p in patchset.patches:
        if p.values.shape != (spec.patch, spec.patch):
            raise DataError(f"stitch: patch at ({p.ox},{p.oy}) has shape {p.values.shape}")

    first = patchset.patches[0].values
    out = np.zeros((h, w), dtype=first.dtype)
    best = np.full((h, w), np.inf)
    yy, xx = np.mgrid[0 : spec.patch, 0 : spec.patch]
    half = (spec.patch - 1) / 2.0
    # center offsets are exact in binary (k + 0.5 or integer), so ties compare exactly
    d_local = (yy - half) ** 2 + (xx - half) ** 2
    for p in sorted(patchset.patches, key=lambda p: (p.oy, p.ox)):
        sl = np.s_[p.oy : p.oy + spec.patch, p.ox : p.ox + spec.patch]
        better = d_local < best[sl]
        out[sl][better] = p.values[better]
        best[sl][better] = d_local[better]
    if np.isinf(best).any():
        raise DataError("stitch: uncovered pixel")  # unreachable if origins validated
    return out


# ---------------------------------------------------------------------------
# Patch directories: patch_<ox>_<oy>.<ext> plus a JSON manifest
# ---------------------------------------------------------------------------

_EXT = {"dem": "cfdr", "mask": "pgm", "confidence": "cfdr"}


def patch_filename(ox: int, oy: int, kind: str) -> str:
    return f"patch_{ox}_{oy}.{_EXT[kind]}"


def save_patchset(patchset: PatchSet, directory, kind: str, nodata: float = 0.0) -> None:
    if kind not in _EXT:
        raise DataError(f"unknown patch kind {kind!r}")
    os.makedirs(directory, exist_ok=True)
    for p in patchset.patches:
        path = os.path.join(directory, patch_filename(p.ox, p.oy, kind))
        if kind == "dem":
            raster.write_dem(raster.DemGrid(values=p.values.astype(np.float32), nodata=nodata), path)
        elif kind == "mask":
            raster.write_mask(raster.MaskGrid(values=p.values.astype(np.uint8)), path)
        else:
            raster.write_confidence(raster.ConfidenceGrid(values=p.values.astype(np.float32)), path)
    manifest = {
        "parent_width": patchset.parent_width,
        "parent_height": patchset.parent_height,
        "patch": patchset.spec.patch,
        "overlap": patchset.spec.overlap,
        "kind": kind,
        "nodata": nodata,
        "origins": [[p.ox, p.oy] for p in patchset.patches],
    }
    with open(os.path.join(directory, "patchset.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_patchset(directory) -> PatchSet:
    manifest_path = os.path.join(directory, "patchset.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataError(f"{directory}: missing patchset manifest ({exc})") from exc
    kind = manifest["kind"]
    spec = PatchSpec(patch=manifest["patch"], overlap=manifest["overlap"])
    patches = []
    for ox, oy in manifest["origins"]:
        path = os.path.join(directory, patch_filename(ox, oy, kind))
        if kind == "mask":
            values = raster.read_mask(path).values
        elif kind == "dem":
            values = raster.read_dem(path).values
        else:
            values = raster.read_confidence(path).values
        patches.append(Patch(ox=ox, oy=oy, values=values))
    return PatchSet(
        patches=tuple(patches),
        parent_width=manifest["parent_width"],
        parent_height=manifest["parent_height"],
        spec=spec,
    )

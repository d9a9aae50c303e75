"""Synthetic DEM strips with injected cloud artifacts and exact truth masks.

Terrain comes from seeded midpoint displacement (diamond-square); cloud
artifacts are elliptical domes raised hundreds to thousands of meters
above the local surface, mimicking elevations mislabelled with cloud-top
heights. Every altered pixel -- and only altered pixels -- goes into the
ground-truth mask, so desk-scale evaluation needs no hand labelling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .mosaic import StripSequence
from .raster import DemGrid, MaskGrid

NODATA = -9999.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    width: int = 128
    height: int = 128
    strip_count: int = 5
    octaves: int = 6          # subdivision levels that receive displacement noise
    amplitude: float = 100.0  # meters, halves per octave
    roughness: float = 0.5
    base_elevation: float = 500.0
    blob_count_min: int = 1
    blob_count_max: int = 3
    blob_radius_min: float = 4.0
    blob_radius_max: float = 14.0
    cloud_offset_min: float = 500.0   # meters above local terrain
    cloud_offset_max: float = 3000.0
    haze_probability: float = 0.0
    haze_offset: float = 80.0
    footprint_min_frac: float = 0.6   # strip footprint side as a fraction of the frame

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.strip_count < 1:
            raise DataError("frame dims and strip count must be positive")
        if not (0 < self.blob_count_min <= self.blob_count_max):
            raise DataError("need 0 < blob_count_min <= blob_count_max")
        if not (0 < self.cloud_offset_min < self.cloud_offset_max):
            raise DataError("need 0 < cloud_offset_min < cloud_offset_max")
        if not (0 < self.roughness < 1) or self.octaves < 0 or self.amplitude < 0:
            raise DataError("bad terrain roughness parameters")
        if not (0 < self.footprint_min_frac <= 1):
            raise DataError("footprint_min_frac must be in (0, 1]")


def displacement_bound(cfg: SynthConfig) -> float:
    """Upper bound on max-min elevation: twice the summed octave amplitudes."""
    total = cfg.amplitude  # corner initialization
    for k in range(cfg.octaves):
        total += cfg.amplitude * cfg.roughness ** (k + 1)
    return 2.0 * total


def gen_terrain(cfg: SynthConfig, rng: np.random.Generator | None = None) -> DemGrid:
    """Diamond-square terrain cropped to the configured frame."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    side_pow = max(1, int(math.ceil(math.log2(max(cfg.width, cfg.height) - 1)))
                   if max(cfg.width, cfg.height) > 2 else 1)
    side = 2**side_pow + 1
    g = np.zeros((side, side), dtype=np.float64)
    amp = cfg.amplitude
    g[0, 0], g[0, -1], g[-1, 0], g[-1, -1] = cfg.base_elevation + rng.uniform(-amp, amp, 4)

    step = side - 1
    level = 0
    while step > 1:
        half = step // 2
        a = cfg.amplitude * cfg.roughness ** (level + 1) if level < cfg.octaves else 0.0
        centers = np.arange(half, side, step)
        # diamond: centers of squares take the corner mean plus noise
        tl = g[np.ix_(centers - half, centers - half)]
        tr = g[np.ix_(centers - half, centers + half)]
        bl = g[np.ix_(centers + half, centers - half)]
        br = g[np.ix_(centers + half, centers + half)]
        g[np.ix_(centers, centers)] = (tl + tr + bl + br) / 4.0 + rng.uniform(
            -a, a, (len(centers), len(centers))
        )
        # square: edge midpoints take the mean of their in-bounds axial neighbors
        padded = np.full((side + 2 * half, side + 2 * half), np.nan)
        padded[half:-half, half:-half] = g
        edges = np.arange(0, side, step)
        for rows, cols in ((centers, edges), (edges, centers)):
            up = padded[np.ix_(rows, cols + half)]
            down = padded[np.ix_(rows + 2 * half, cols + half)]
            left = padded[np.ix_(rows + half, cols)]
            right = padded[np.ix_(rows + half, cols + 2 * half)]
            stackd = np.stack([up, down, left, right])
            with np.errstate(invalid="ignore"):
                mean = np.nanmean(stackd, axis=0)
            g[np.ix_(rows, cols)] = mean + rng.uniform(-a, a, mean.shape)
        step = half
        level += 1

    values = g[: cfg.height, : cfg.width].astype(np.float32)
    return DemGrid(values=values, nodata=NODATA)


def _ellipse_mask(h: int, w: int, cy: float, cx: float, ry: float, rx: float,
                  angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    ca, sa = math.cos(angle), math.sin(angle)
    u = (dx * ca + dy * sa) / rx
    v = (-dx * sa + dy * ca) / ry
    return u * u + v * v <= 1.0


def inject_clouds(terrain: DemGrid, cfg: SynthConfig,
                  rng: np.random.Generator | None = None,
                  region: tuple[int, int, int, int] | None = None):
    """Raise dome-shaped blobs above the surface; returns (grid, truth mask).

    Every masked pixel sits at least cloud_offset_min above the input
    terrain. `region` (y0, y1, x0, x1) restricts blob centers, so clouds
    stay inside a strip footprint.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h, w = terrain.values.shape
    y0, y1, x0, x1 = region if region is not None else (0, h, 0, w)
    values = terrain.values.copy()
    truth = np.zeros((h, w), dtype=np.uint8)
    valid = terrain.valid_mask()

    n_blobs = int(rng.integers(cfg.blob_count_min, cfg.blob_count_max + 1))
    dome = min(250.0, (cfg.cloud_offset_max - cfg.cloud_offset_min) / 2.0)
    for _ in range(n_blobs):
        cy = rng.uniform(y0, y1)
        cx = rng.uniform(x0, x1)
        ry = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max)
        rx = rng.uniform(cfg.blob_radius_min, cfg.blob_radius_max)
        angle = rng.uniform(0.0, math.pi)
        base = rng.uniform(cfg.cloud_offset_min, cfg.cloud_offset_max - dome)
        inside = _ellipse_mask(h, w, cy, cx, ry, rx, angle) & valid
        if region is not None:
            box = np.zeros_like(inside)
            box[y0:y1, x0:x1] = True
            inside &= box
        if not inside.any():
            continue
        yy, xx = np.mgrid[0:h, 0:w]
        ca, sa = math.cos(angle), math.sin(angle)
        u = ((xx - cx) * ca + (yy - cy) * sa) / rx
        v = (-(xx - cx) * sa + (yy - cy) * ca) / ry
        r2 = np.clip(u * u + v * v, 0.0, 1.0)
        lift = base + dome * (1.0 - r2)
        values[inside] = (terrain.values[inside].astype(np.float64) + lift[inside]).astype(np.float32)
        truth[inside] = 1

    if cfg.haze_probability > 0 and rng.uniform() < cfg.haze_probability:
        ry = rng.uniform(h / 4, h / 2)
        rx = rng.uniform(w / 4, w / 2)
        cy = rng.uniform(y0, y1)
        cx = rng.uniform(x0, x1)
        inside = _ellipse_mask(h, w, cy, cx, ry, rx, 0.0) & valid
        if region is not None:
            box = np.zeros_like(inside)
            box[y0:y1, x0:x1] = True
            inside &= box
        if inside.any():
            values[inside] = (values[inside].astype(np.float64) + cfg.haze_offset).astype(np.float32)
            truth[inside] = 1

    return DemGrid(values=values, nodata=terrain.nodata), MaskGrid(values=truth)


def gen_dataset(cfg: SynthConfig):
    """Deterministic strip sequence with per-strip truth masks.

    Returns (StripSequence, [MaskGrid truths], terrain). Strips share one
    underlying terrain; each covers a random axis-aligned footprint, is
    nodata elsewhere, and carries its own injected clouds.
    """
    rng = np.random.default_rng(cfg.seed)
    terrain = gen_terrain(cfg, rng)
    h, w = terrain.values.shape
    strips = []
    truths = []
    for t in range(cfg.strip_count):
        fh = int(rng.integers(int(cfg.footprint_min_frac * h), h + 1))
        fw = int(rng.integers(int(cfg.footprint_min_frac * w), w + 1))
        y0 = int(rng.integers(0, h - fh + 1))
        x0 = int(rng.integers(0, w - fw + 1))
        region = (y0, y0 + fh, x0, x0 + fw)
        cloudy, truth = inject_clouds(terrain, cfg, rng, region=region)
        values = np.full((h, w), np.float32(NODATA), dtype=np.float32)
        sl = np.s_[y0 : y0 + fh, x0 : x0 + fw]
        values[sl] = cloudy.values[sl]
        strips.append((t, DemGrid(values=values, nodata=NODATA)))
        truths.append(truth)
    return StripSequence(strips=tuple(strips)), truths, terrain

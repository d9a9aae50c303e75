"""Sliding-window gray-level co-occurrence texture features.

For every pixel we quantize its elevation neighborhood, count co-occurring
level pairs inside the centered window for each of the four unit offsets,
and derive 13 statistics per offset: 52 channels total. Windows are
clipped at image borders and a pair only counts when both endpoints lie
inside the window and neither is nodata. A window with zero valid pairs
yields the zero matrix and all-zero features.

The per-pixel path (`glcm_window` + `glcm_features`) defines the
semantics. `texture_stack` is the production implementation: batched
integer pair counting over strided window views, then vectorized feature
evaluation. Both produce identical counts; feature values agree to
floating-point roundoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .raster import DemGrid

# (drow, dcol): right, left, down, up
OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0))

FEATURE_NAMES = (
    "contrast",
    "dissimilarity",
    "homogeneity",
    "energy",
    "asm",
    "entropy",
    "correlation",
    "glcm_mean",
    "glcm_variance",
    "max_probability",
    "cluster_shade",
    "cluster_prominence",
    "autocorrelation",
)

STACK_CHANNELS = len(FEATURE_NAMES) * len(OFFSETS)  # 52


@dataclass(frozen=True)
class GlcmParams:
    levels: int
    window: int
    bounds: tuple[float, float]  # (min, max) elevation for quantization

    def __post_init__(self):
        if self.levels < 2:
            raise DataError(f"levels must be >= 2, got {self.levels}")
        if self.window < 3 or self.window % 2 == 0:
            raise DataError(f"window must be odd and >= 3, got {self.window}")
        if not self.bounds[0] < self.bounds[1]:
            raise DataError(f"degenerate quantization bounds {self.bounds}")


def quantize(grid: DemGrid, params: GlcmParams) -> np.ndarray:
    """Map elevations to gray levels 0..levels-1; nodata becomes -1."""
    lo, hi = params.bounds
    v = np.clip(grid.values.astype(np.float64), lo, hi)
    lev = np.floor((v - lo) / (hi - lo) * params.levels)
    lev = np.minimum(lev, params.levels - 1).astype(np.int16)
    lev[~grid.valid_mask()] = -1
    return lev


def glcm_window(gray: np.ndarray, center: tuple[int, int], params: GlcmParams,
                offset: tuple[int, int]) -> np.ndarray:
    """Normalized co-occurrence matrix of one window around `center`.

    `center` is (row, col). Returns an (levels, levels) float64 matrix of
    pair probabilities; the zero matrix if the window has no valid pair.
    """
    L = params.levels
    r = params.window // 2
    h, w = gray.shape
    cy, cx = center
    r0, r1 = max(0, cy - r), min(h, cy + r + 1)
    c0, c1 = max(0, cx - r), min(w, cx + r + 1)
    sub = gray[r0:r1, c0:c1]
    dr, dc = offset
    sh, sw = sub.shape
    # origin region inside the window such that origin + offset stays inside
    ro = slice(max(0, -dr), sh - max(0, dr))
    co = slice(max(0, -dc), sw - max(0, dc))
    rn = slice(max(0, dr), sh + min(0, dr))
    cn = slice(max(0, dc), sw + min(0, dc))
    ref = sub[ro, co]
    nbr = sub[rn, cn]
    ok = (ref >= 0) & (nbr >= 0)
    counts = np.bincount(
        (ref[ok].astype(np.int64) * L + nbr[ok]), minlength=L * L
    ).reshape(L, L)
    n = counts.sum()
    if n == 0:
        return np.zeros((L, L), dtype=np.float64)
    return counts.astype(np.float64) / n


def glcm_features(matrix: np.ndarray) -> np.ndarray:
    """The 13 texture statistics of one normalized co-occurrence matrix.

    Order follows FEATURE_NAMES. Degenerate cases: an all-zero matrix
    (empty window) yields all zeros; correlation is 0 when either marginal
    variance is 0; 0*ln(0) is taken as 0.
    """
    total = matrix.sum()
    if total == 0:
        return np.zeros(len(FEATURE_NAMES), dtype=np.float64)
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"co-occurrence matrix is not normalized (sum={total!r})")
    L = matrix.shape[0]
    lev = np.arange(L, dtype=np.float64)
    i = lev[:, None]
    j = lev[None, :]
    diff = i - j

    pi = matrix.sum(axis=1)
    pj = matrix.sum(axis=0)
    mu_i = (lev * pi).sum()
    mu_j = (lev * pj).sum()
    var_i = ((lev - mu_i) ** 2 * pi).sum()
    var_j = ((lev - mu_j) ** 2 * pj).sum()

    contrast = (matrix * diff**2).sum()
    dissimilarity = (matrix * np.abs(diff)).sum()
    homogeneity = (matrix / (1.0 + diff**2)).sum()
    asm = (matrix * matrix).sum()
    energy = np.sqrt(asm)
    logs = np.zeros_like(matrix)
    np.log(matrix, out=logs, where=matrix > 0)
    entropy = -(matrix * logs).sum()
    denom = np.sqrt(var_i * var_j)
    if denom > 0:
        correlation = (matrix * ((i - mu_i) * (j - mu_j))).sum() / denom
    else:
        correlation = 0.0
    d = (i - mu_i) + (j - mu_j)
    d2 = d * d
    d3 = d2 * d
    d4 = d3 * d
    cluster_shade = (matrix * d3).sum()
    cluster_prominence = (matrix * d4).sum()
    autocorrelation = (matrix * (i * j)).sum()

    return np.array([
        contrast, dissimilarity, homogeneity, energy, asm, entropy,
        correlation, mu_i, var_i, matrix.max(), cluster_shade,
        cluster_prominence, autocorrelation,
    ])


# ---------------------------------------------------------------------------
# Production path: all windows of a patch at once
# ---------------------------------------------------------------------------


def _pair_codes(gray: np.ndarray, offset: tuple[int, int], levels: int) -> np.ndarray:
    """Joint code ref*levels + nbr per pair origin; levels**2 marks invalid."""
    h, w = gray.shape
    dr, dc = offset
    code = np.full((h, w), levels * levels, dtype=np.int32)
    ro = slice(max(0, -dr), h - max(0, dr))
    co = slice(max(0, -dc), w - max(0, dc))
    rn = slice(max(0, dr), h + min(0, dr))
    cn = slice(max(0, dc), w + min(0, dc))
    ref = gray[ro, co]
    nbr = gray[rn, cn]
    ok = (ref >= 0) & (nbr >= 0)
    region = code[ro, co]
    region[ok] = ref[ok].astype(np.int32) * levels + nbr[ok]
    return code


def _features_from_counts(counts: np.ndarray, L: int) -> np.ndarray:
    """Vectorized 13-feature evaluation for a batch of count matrices."""
    lev = np.arange(L, dtype=np.float64)
    icell = np.repeat(lev, L)  # reference level per flattened cell
    jcell = np.tile(lev, L)
    diff = icell - jcell

    n = counts.shape[0]
    npairs = counts.sum(axis=1)
    nonzero = npairs > 0
    p = np.zeros(counts.shape, dtype=np.float64)
    np.divide(counts, npairs[:, None], out=p, where=nonzero[:, None])

    pi = p.reshape(n, L, L).sum(axis=2)
    pj = p.reshape(n, L, L).sum(axis=1)
    mu_i = (lev * pi).sum(axis=1)
    mu_j = (lev * pj).sum(axis=1)
    var_i = (((lev[None, :] - mu_i[:, None]) ** 2) * pi).sum(axis=1)
    var_j = (((lev[None, :] - mu_j[:, None]) ** 2) * pj).sum(axis=1)

    feats = np.zeros((n, len(FEATURE_NAMES)), dtype=np.float64)
    feats[:, 0] = (p * diff**2).sum(axis=1)
    feats[:, 1] = (p * np.abs(diff)).sum(axis=1)
    feats[:, 2] = (p / (1.0 + diff**2)).sum(axis=1)
    asm = (p * p).sum(axis=1)
    feats[:, 3] = np.sqrt(asm)
    feats[:, 4] = asm
    logs = np.zeros_like(p)
    np.log(p, out=logs, where=p > 0)
    feats[:, 5] = -(p * logs).sum(axis=1)
    ci = icell[None, :] - mu_i[:, None]
    cj = jcell[None, :] - mu_j[:, None]
    num = (p * (ci * cj)).sum(axis=1)
    denom = np.sqrt(var_i * var_j)
    np.divide(num, denom, out=feats[:, 6], where=denom > 0)
    feats[:, 7] = mu_i
    feats[:, 8] = var_i
    feats[:, 9] = p.max(axis=1)
    d = ci + cj
    d2 = d * d
    d3 = d2 * d
    d4 = d3 * d
    feats[:, 10] = (p * d3).sum(axis=1)
    feats[:, 11] = (p * d4).sum(axis=1)
    feats[:, 12] = (p * (icell * jcell)).sum(axis=1)
    feats[~nonzero] = 0.0
    return feats


def texture_stack(patch: DemGrid, params: GlcmParams,
                  stats: "ChannelStats | None" = None,
                  chunk: int = 4096) -> np.ndarray:
    """(H, W, 52) float64 feature volume for one patch.

    Channel layout is offset-major: channel = offset_index * 13 +
    feature_index, offsets ordered right/left/down/up. With `stats` the
    volume is min-max normalized (and clamped) to [0, 1] per channel;
    without it the raw feature values are returned.
    """
    w = params.window
    r = w // 2
    if patch.height < 1 or patch.width < 1:
        raise DataError("patch too small for texture features")
    gray = quantize(patch, params)
    h, wd = gray.shape
    L = params.levels
    invalid = L * L
    nbins = invalid + 1
    out = np.empty((h, wd, STACK_CHANNELS), dtype=np.float64)

    for oi, off in enumerate(OFFSETS):
        code = _pair_codes(gray, off, L)
        padded = np.full((h + 2 * r, wd + 2 * r), invalid, dtype=np.int32)
        padded[r : r + h, r : r + wd] = code
        view = sliding_window_view(padded, (w, w))  # (h, wd, w, w)
        dr, dc = off
        rs = slice(0, w - dr) if dr >= 0 else slice(-dr, w)
        cs = slice(0, w - dc) if dc >= 0 else slice(-dc, w)
        codes = view[:, :, rs, cs].reshape(h * wd, -1)

        feats = np.empty((h * wd, len(FEATURE_NAMES)), dtype=np.float64)
        for lo in range(0, codes.shape[0], chunk):
            block = codes[lo : lo + chunk]
            nb = block.shape[0]
            rowbase = np.arange(nb, dtype=np.int64)[:, None] * nbins
            counts = np.bincount(
                (block.astype(np.int64) + rowbase).ravel(), minlength=nb * nbins
            ).reshape(nb, nbins)[:, :invalid]
            feats[lo : lo + nb] = _features_from_counts(counts, L)
        out[:, :, oi * 13 : (oi + 1) * 13] = feats.reshape(h, wd, 13)

    if stats is not None:
        out = stats.apply(out)
    return out


# ---------------------------------------------------------------------------
# Dataset-level normalization statistics
# ---------------------------------------------------------------------------


@dataclass
class ChannelStats:
    """Per-channel min/max over the training dataset's raw stacks."""

    mins: np.ndarray  # (52,)
    maxs: np.ndarray

    @classmethod
    def accumulate(cls, stacks) -> "ChannelStats":
        mins = np.full(STACK_CHANNELS, np.inf)
        maxs = np.full(STACK_CHANNELS, -np.inf)
        count = 0
        for stack in stacks:
            mins = np.minimum(mins, stack.min(axis=(0, 1)))
            maxs = np.maximum(maxs, stack.max(axis=(0, 1)))
            count += 1
        if count == 0:
            raise DataError("cannot derive channel statistics from zero stacks")
        return cls(mins=mins, maxs=maxs)

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Min-max normalize to [0,1]; constant channels map to 0."""
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = np.clip((raw - self.mins) / safe, 0.0, 1.0)
        return np.where(span > 0, out, 0.0)

    def save(self, path, params: GlcmParams) -> None:
        doc = {
            "levels": params.levels,
            "window": params.window,
            "bounds": list(params.bounds),
            "offsets": [list(o) for o in OFFSETS],
            "features": list(FEATURE_NAMES),
            "channel_order": "offset_major",
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ChannelStats":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise DataError(f"missing channel statistics: {exc}") from exc
        return cls(mins=np.asarray(doc["mins"], dtype=np.float64),
                   maxs=np.asarray(doc["maxs"], dtype=np.float64))

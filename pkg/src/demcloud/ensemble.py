"""Multi-window vote combination, thresholding, and mask dilation.

Member confidences multiply pixelwise, so one member predicting 0 vetoes
the detection outright. The product is thresholded (inclusive >=) and the
resulting mask dilated with a square structuring element to recover the
under-predicted rims of cloud regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .raster import ConfidenceGrid, MaskGrid


@dataclass(frozen=True)
class EnsembleConfig:
    threshold: float = 0.1
    kernel: tuple[int, int] = (5, 5)
    members: int = 3

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise DataError(f"threshold must be in (0, 1), got {self.threshold}")
        if any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise DataError(f"dilation kernel dims must be odd, got {self.kernel}")


def combine(*members: ConfidenceGrid) -> ConfidenceGrid:
    """Pixelwise product of member confidences."""
    if not members:
        raise DataError("combine needs at least one member")
    shape = members[0].values.shape
    for m in members[1:]:
        if m.values.shape != shape:
            raise DataError(f"combine: dimension mismatch {m.values.shape} vs {shape}")
    out = members[0].values.astype(np.float64)
    for m in members[1:]:
        out = out * m.values
    return ConfidenceGrid(values=out.astype(np.float32))


def threshold(conf: ConfidenceGrid, t: float) -> MaskGrid:
    """1 iff confidence >= t (inclusive at the boundary)."""
    if not (0.0 < t < 1.0):
        raise DataError(f"threshold must be in (0, 1), got {t}")
    return MaskGrid(values=(conf.values >= np.float32(t)).astype(np.uint8))


def dilate(mask: MaskGrid, kernel: tuple[int, int] = (5, 5)) -> MaskGrid:
    """Set a pixel when any input 1 lies under the centered kernel.

    The kernel is clipped at borders; output always contains the input.
    """
    kh, kw = kernel
    if kh < 1 or kw < 1 or kh % 2 == 0 or kw % 2 == 0:
        raise DataError(f"dilation kernel dims must be odd, got {kernel}")
    padded = np.pad(mask.values, ((kh // 2, kh // 2), (kw // 2, kw // 2)))
    out = sliding_window_view(padded, (kh, kw)).max(axis=(-2, -1))
    return MaskGrid(values=out)

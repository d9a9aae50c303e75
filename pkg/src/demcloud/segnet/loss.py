"""Class-weighted cross-entropy over per-pixel softmax probabilities."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import DataError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def weighted_ce_loss(probs: np.ndarray, targets: np.ndarray, weights):
    """Mean over pixels of -w[y] * ln(p[y]), plus the gradient w.r.t. logits.

    probs: (N, C, H, W) softmax outputs; targets: (N, H, W) integer labels;
    weights: per-class loss weights, e.g. (0.3, 0.7). Probabilities at the
    target class are clamped at 1e-12 before the log (and the clamp is
    logged), so a fully-confident wrong prediction cannot produce inf.
    """
    n, c, h, w = probs.shape
    if targets.shape != (n, h, w):
        raise DataError(f"targets {targets.shape} do not match probs {probs.shape}")
    if targets.min() < 0 or targets.max() >= c:
        raise DataError(f"target labels outside [0, {c})")
    weights = np.asarray(weights, dtype=probs.dtype)
    if weights.shape != (c,) or (weights <= 0).any():
        raise DataError(f"need {c} positive class weights, got {weights}")

    npix = targets.size
    p_y = np.take_along_axis(probs, targets[:, None], axis=1)[:, 0]
    w_y = weights[targets]
    clamped = np.maximum(p_y, PROB_FLOOR)
    n_clamped = int((p_y < PROB_FLOOR).sum())
    if n_clamped:
        logger.debug("clamped %d zero probabilities in the loss", n_clamped)
    loss = float((w_y * -np.log(clamped)).sum(dtype=np.float64) / npix)

    onehot = (np.arange(c)[None, :, None, None] == targets[:, None]).astype(probs.dtype)
    dlogits = (probs - onehot) * (w_y[:, None] / npix)
    return loss, dlogits

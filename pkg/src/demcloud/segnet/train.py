"""Seeded training loop: shuffle-split, minibatch Adam, best-on-validation.

The dataset is a list of (stack (H,W,C), mask (H,W)) pairs. Splitting and
epoch shuffling derive from one seed, so a given (dataset, config) pair
always produces bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .. import metrics
from .adam import adam_step
from .loss import weighted_ce_loss
from .unet import UNetConfig, UNetParams, init_params, unet_backward, unet_forward


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    epochs: int = 200
    class_weights: tuple[float, float] = (0.3, 0.7)
    batch_size: int = 4
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if any(w <= 0 for w in self.class_weights):
            raise DataError("class weights must be positive")
        if not (0 < self.val_fraction + self.test_fraction < 1):
            raise DataError("train/val/test fractions must each be positive and sum to 1")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise DataError("epochs, batch_size and lr must be positive")


@dataclass
class TrainResult:
    params: UNetParams
    log: list[str] = field(repr=False)
    best_epoch: int
    best_val_miou: float
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


def split_indices(n: int, val_fraction: float, test_fraction: float,
                  rng: np.random.Generator):
    """Seeded shuffle split; sizes floor(n*train), floor(n*val), remainder."""
    perm = rng.permutation(n)
    n_train = math.floor(n * (1.0 - val_fraction - test_fraction))
    n_val = math.floor(n * val_fraction)
    train = perm[:n_train]
    val = perm[n_train : n_train + n_val]
    test = perm[n_train + n_val :]
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise DataError(f"empty split for dataset of {n} items")
    return train, val, test


def _batched_eval(cfg, params, xs, ts, weights, batch_size):
    """Loss and mIoU (argmax prediction) over one split."""
    total_loss = 0.0
    cm = metrics.ConfusionMatrix(0, 0, 0, 0)
    for lo in range(0, len(xs), batch_size):
        x = xs[lo : lo + batch_size]
        t = ts[lo : lo + batch_size]
        probs, _ = unet_forward(cfg, params, x)
        loss, _ = weighted_ce_loss(probs, t, weights)
        total_loss += loss * len(x)
        pred = (probs[:, 1] >= probs[:, 0]).astype(np.uint8)
        cm = cm + metrics.confusion(pred, t.astype(np.uint8))
    _, _, miou = metrics.iou(cm)
    return total_loss / len(xs), miou


def train(dataset, tcfg: TrainConfig, ncfg: UNetConfig,
          dtype=np.float32, progress=None) -> TrainResult:
    """Train and return the parameters with the best validation mIoU.

    Log lines are "epoch<TAB>train_loss<TAB>val_loss<TAB>val_miou".
    `progress`, when given, is called with each finished log line.
    """
    if not dataset:
        raise DataError("empty training dataset")
    xs = np.stack([np.ascontiguousarray(s.transpose(2, 0, 1)) for s, _ in dataset]).astype(dtype)
    ts = np.stack([m for _, m in dataset]).astype(np.int64)

    seq = np.random.SeedSequence(tcfg.seed)
    init_seed, shuffle_seed = seq.spawn(2)
    params = init_params(ncfg, init_seed, dtype=dtype)
    rng = np.random.default_rng(shuffle_seed)
    train_idx, val_idx, test_idx = split_indices(
        len(dataset), tcfg.val_fraction, tcfg.test_fraction, rng
    )

    best_miou = -1.0
    best_params = params.clone()
    best_epoch = -1
    log: list[str] = []
    for epoch in range(tcfg.epochs):
        order = rng.permutation(train_idx)
        total = 0.0
        for lo in range(0, len(order), tcfg.batch_size):
            b = order[lo : lo + tcfg.batch_size]
            probs, tape = unet_forward(ncfg, params, xs[b])
            loss, dlogits = weighted_ce_loss(probs, ts[b], tcfg.class_weights)
            if not math.isfinite(loss):
                raise DataError(f"training diverged at epoch {epoch} (loss={loss})")
            grads = unet_backward(ncfg, params, tape, dlogits.astype(dtype))
            adam_step(params, grads, tcfg.lr)
            total += loss * len(b)
        train_loss = total / len(order)
        val_loss, val_miou = _batched_eval(
            ncfg, params, xs[val_idx], ts[val_idx], tcfg.class_weights, tcfg.batch_size
        )
        line = f"{epoch}\t{train_loss:.6f}\t{val_loss:.6f}\t{val_miou:.6f}"
        log.append(line)
        if progress is not None:
            progress(line)
        if val_miou > best_miou:
            best_miou = val_miou
            best_params = params.clone()
            best_epoch = epoch
    return TrainResult(
        params=best_params, log=log, best_epoch=best_epoch, best_val_miou=best_miou,
        train_idx=train_idx, val_idx=val_idx, test_idx=test_idx,
    )

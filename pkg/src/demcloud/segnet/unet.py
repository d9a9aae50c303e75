"""Encoder-decoder segmentation network with skip connections.

Four encoder blocks ([conv3x3+ReLU] x2 then 2x2 maxpool) take the input
down to 1/16 resolution, a two-conv bottleneck widens it to 512 channels,
and four decoder blocks (2x2 transposed conv + ReLU, concatenation with
the matching encoder output, then [conv3x3+ReLU] x2) bring it back up.
The last decoder block tapers to 16 channels, a final 1x1 convolution
maps those to the 2 class logits, and a channelwise softmax yields the
per-pixel cloud probability.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from . import layers


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 52
    class_count: int = 2
    encoder: tuple[int, int, int, int] = (32, 64, 128, 256)
    bottleneck: int = 512
    decoder: tuple[int, int, int, int] = (256, 128, 64, 16)

    def __post_init__(self):
        if len(self.encoder) != 4 or len(self.decoder) != 4:
            raise DataError("encoder and decoder schedules must have 4 entries")
        if self.in_channels < 1 or self.class_count < 2:
            raise DataError("need at least 1 input channel and 2 classes")


@dataclass
class UNetParams:
    weights: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(repr=False, default=None)
    v: dict[str, np.ndarray] = field(repr=False, default=None)
    step: int = 0

    def clone(self) -> "UNetParams":
        return copy.deepcopy(self)


def _conv_shapes(cfg: UNetConfig):
    """(name, kind, cin, cout) for every learnable layer, forward order."""
    out = []
    cin = cfg.in_channels
    for i, ch in enumerate(cfg.encoder):
        out.append((f"enc{i}.c1", "conv3", cin, ch))
        out.append((f"enc{i}.c2", "conv3", ch, ch))
        cin = ch
    out.append(("bott.c1", "conv3", cin, cfg.bottleneck))
    out.append(("bott.c2", "conv3", cfg.bottleneck, cfg.bottleneck))
    cin = cfg.bottleneck
    for i, ch in enumerate(cfg.decoder):
        skip = cfg.encoder[3 - i]
        out.append((f"dec{i}.up", "upconv", cin, ch))
        out.append((f"dec{i}.c1", "conv3", ch + skip, ch))
        out.append((f"dec{i}.c2", "conv3", ch, ch))
        cin = ch
    out.append(("head", "conv1", cin, cfg.class_count))
    return out


def init_params(cfg: UNetConfig, seed: int, dtype=np.float32) -> UNetParams:
    """He-uniform weights (fan-in scaled), zero biases, zero moments."""
    rng = np.random.default_rng(seed)
    weights: dict[str, np.ndarray] = {}
    for name, kind, cin, cout in _conv_shapes(cfg):
        if kind == "conv3":
            shape, fan_in = (cout, cin, 3, 3), cin * 9
        elif kind == "conv1":
            shape, fan_in = (cout, cin, 1, 1), cin
        else:  # upconv
            shape, fan_in = (cin, cout, 2, 2), cin * 4
        weights[f"{name}.w"] = layers.he_uniform(shape, fan_in, rng, dtype)
        weights[f"{name}.b"] = np.zeros(cout, dtype=dtype)
    zeros = lambda: {k: np.zeros_like(a) for k, a in weights.items()}
    return UNetParams(weights=weights, m=zeros(), v=zeros(), step=0)


def _check_input(cfg: UNetConfig, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise DataError(f"expected (N, C, H, W) input, got {x.shape}")
    n, c, h, w = x.shape
    if c != cfg.in_channels:
        raise DataError(f"expected {cfg.in_channels} input channels, got {c}")
    if h % 16 or w % 16 or h < 16 or w < 16:
        raise DataError(f"spatial dims must be divisible by 16, got {h}x{w}")


def _conv_relu(params, name, x, pad, tape):
    w = params.weights[f"{name}.w"]
    b = params.weights[f"{name}.b"]
    z, ccache = layers.conv2d_forward(x, w, b, stride=1, pad=pad)
    a, rcache = layers.relu_forward(z)
    tape[name] = (ccache, rcache)
    return a


def unet_forward(cfg: UNetConfig, params: UNetParams, x: np.ndarray):
    """Full forward pass. Returns (probs (N,C,H,W), cache for backward).

    cache["bottleneck_shape"] records the (N, C, H/16, W/16) contract.
    """
    _check_input(cfg, x)
    tape: dict = {}
    skips = []
    h = x
    for i in range(4):
        h = _conv_relu(params, f"enc{i}.c1", h, 1, tape)
        h = _conv_relu(params, f"enc{i}.c2", h, 1, tape)
        skips.append(h)
        h, pcache = layers.maxpool_forward(h)
        tape[f"enc{i}.pool"] = pcache
    h = _conv_relu(params, "bott.c1", h, 1, tape)
    h = _conv_relu(params, "bott.c2", h, 1, tape)
    tape["bottleneck_shape"] = h.shape
    for i in range(4):
        w = params.weights[f"dec{i}.up.w"]
        b = params.weights[f"dec{i}.up.b"]
        up, ucache = layers.upconv_forward(h, w, b)
        act, rcache = layers.relu_forward(up)
        tape[f"dec{i}.up"] = (ucache, rcache)
        skip = skips[3 - i]
        h = np.concatenate([act, skip], axis=1)
        tape[f"dec{i}.split"] = act.shape[1]
        h = _conv_relu(params, f"dec{i}.c1", h, 1, tape)
        h = _conv_relu(params, f"dec{i}.c2", h, 1, tape)
    w = params.weights["head.w"]
    b = params.weights["head.b"]
    logits, hcache = layers.conv2d_forward(h, w, b, stride=1, pad=0)
    tape["head"] = hcache
    probs = layers.softmax_channelwise(logits)
    return probs, tape


def _conv_relu_back(name, d, tape, grads):
    ccache, rcache = tape[name]
    d = layers.relu_backward(d, rcache)
    d, dw, db = layers.conv2d_backward(d, ccache)
    grads[f"{name}.w"] = dw
    grads[f"{name}.b"] = db
    return d


def unet_backward(cfg: UNetConfig, params: UNetParams, tape: dict,
                  dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, given dL/dlogits."""
    grads: dict[str, np.ndarray] = {}
    d, dw, db = layers.conv2d_backward(dlogits, tape["head"])
    grads["head.w"] = dw
    grads["head.b"] = db
    skip_grads = {}
    for i in reversed(range(4)):
        d = _conv_relu_back(f"dec{i}.c2", d, tape, grads)
        d = _conv_relu_back(f"dec{i}.c1", d, tape, grads)
        n_up = tape[f"dec{i}.split"]
        d_up, skip_grads[3 - i] = d[:, :n_up], d[:, n_up:]
        ucache, rcache = tape[f"dec{i}.up"]
        d_up = layers.relu_backward(d_up, rcache)
        d, dw, db = layers.upconv_backward(d_up, ucache)
        grads[f"dec{i}.up.w"] = dw
        grads[f"dec{i}.up.b"] = db
    d = _conv_relu_back("bott.c2", d, tape, grads)
    d = _conv_relu_back("bott.c1", d, tape, grads)
    for i in reversed(range(4)):
        d = layers.maxpool_backward(d, tape[f"enc{i}.pool"])
        d = d + skip_grads[i]
        d = _conv_relu_back(f"enc{i}.c2", d, tape, grads)
        d = _conv_relu_back(f"enc{i}.c1", d, tape, grads)
    return grads


def predict(cfg: UNetConfig, params: UNetParams, stack: np.ndarray) -> np.ndarray:
    """Cloud-class probability grid for one (H, W, C) texture stack."""
    if stack.ndim != 3 or stack.shape[2] != cfg.in_channels:
        raise DataError(f"expected (H, W, {cfg.in_channels}) stack, got {stack.shape}")
    dtype = next(iter(params.weights.values())).dtype
    x = np.ascontiguousarray(stack.transpose(2, 0, 1))[None].astype(dtype)
    probs, _ = unet_forward(cfg, params, x)
    return probs[0, 1].astype(np.float64)

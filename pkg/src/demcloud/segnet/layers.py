"""Network layer primitives on (N, C, H, W) arrays.

Every forward returns (output, cache) and every backward consumes the
matching cache and returns exact analytic gradients. Convolutions are
cross-correlations (no kernel flip) computed as im2col + GEMM; the
transposed convolution is the fixed kernel-2/stride-2 upsampler the
decoder uses. Layers run in whatever float dtype they are fed, so
gradient checks can use float64 while training runs float32.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError


def _col_view(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, Ho, Wo, k, k) window view of a padded input."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    v = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   stride: int = 1, pad: int = 0):
    """Cross-correlation of x (N,Cin,H,W) with w (Cout,Cin,k,k) plus bias."""
    n, cin, h, wd = x.shape
    cout, cin_w, k, k2 = w.shape
    if cin != cin_w or k != k2:
        raise DataError(f"conv shape mismatch: x {x.shape} vs w {w.shape}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise DataError(f"conv output would be empty for input {x.shape}")
    cols = np.ascontiguousarray(
        _col_view(x, k, stride, pad).transpose(0, 2, 3, 1, 4, 5)
    ).reshape(n * ho * wo, cin * k * k)
    y = cols @ w.reshape(cout, -1).T + b
    y = y.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    cache = (x.shape, cols, w, stride, pad)
    return np.ascontiguousarray(y), cache


def conv2d_backward(dy: np.ndarray, cache):
    x_shape, cols, w, stride, pad = cache
    n, cin, h, wd = x_shape
    cout, _, k, _ = w.shape
    _, _, ho, wo = dy.shape

    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, cout)
    db = dy_mat.sum(axis=0)
    dw = (dy_mat.T @ cols).reshape(w.shape)

    # dx = full correlation of (stride-dilated) dy with the flipped kernel
    if stride > 1:
        dil = np.zeros((n, cout, (ho - 1) * stride + 1, (wo - 1) * stride + 1), dtype=dy.dtype)
        dil[:, :, ::stride, ::stride] = dy
    else:
        dil = dy
    w_back = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx_core, _ = conv2d_forward(
        dil, w_back, np.zeros(cin, dtype=dy.dtype), stride=1, pad=k - 1 - pad
    )
    if dx_core.shape[2:] == (h, wd):
        dx = dx_core
    else:
        # pixels past the last window never influenced the output
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :, : dx_core.shape[2], : dx_core.shape[3]] = dx_core
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dy: np.ndarray, cache):
    return dy * cache


def maxpool_forward(x: np.ndarray):
    """2x2 max pooling with stride 2; H and W must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DataError(f"maxpool needs even spatial dims, got {h}x{w}")
    v = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )
    idx = v.argmax(axis=-1)  # first index wins ties
    y = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx)


def maxpool_backward(dy: np.ndarray, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(flat, idx[..., None], dy[..., None], axis=-1)
    return flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)


def upconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Transposed convolution, kernel 2, stride 2: doubles H and W.

    w has shape (Cin, Cout, 2, 2); each input pixel paints one 2x2 block.
    """
    n, cin, h, wd = x.shape
    cin_w, cout, k, _ = w.shape
    if cin != cin_w or k != 2:
        raise DataError(f"upconv shape mismatch: x {x.shape} vs w {w.shape}")
    t = np.tensordot(x, w, axes=([1], [0]))  # (n, h, w, cout, 2, 2)
    y = t.transpose(0, 3, 1, 4, 2, 5).reshape(n, cout, 2 * h, 2 * wd)
    y = y + b[None, :, None, None]
    return np.ascontiguousarray(y), (x, w)


def upconv_backward(dy: np.ndarray, cache):
    x, w = cache
    n, cin, h, wd = x.shape
    cout = w.shape[1]
    blocks = dy.reshape(n, cout, h, 2, wd, 2)
    dx = np.einsum("nohkwl,cokl->nchw", blocks, w, optimize=True)
    dw = np.einsum("nchw,nohkwl->cokl", x, blocks, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def softmax_channelwise(z: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the channel axis of (N, C, H, W) logits."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(dy: np.ndarray, probs: np.ndarray) -> np.ndarray:
    inner = (dy * probs).sum(axis=1, keepdims=True)
    return probs * (dy - inner)


def he_uniform(shape, fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)

"""Adam parameter updates with bias correction, applied in place."""

from __future__ import annotations

import numpy as np

from ..errors import DataError


def adam_step(params, grads: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One optimizer step over every gradient in `grads`.

    `params` carries the weight arrays plus their first/second moment
    buffers and the shared step counter (see UNetParams). Moments update
    in place; a non-finite gradient aborts before any state changes.
    """
    for name, g in grads.items():
        if name not in params.weights:
            raise DataError(f"gradient for unknown parameter {name!r}")
        if not np.isfinite(g).all():
            raise DataError(f"non-finite gradient in {name!r}")

    params.step += 1
    t = params.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params.weights[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)

"""Independent reference implementations used to check the production code.

Everything here is deliberately naive: per-window double loops, per-pixel
tallies, explicit threshold sweeps, the scalar Adam recurrence. None of it
shares code with the package.
"""

import math

import numpy as np


# --- GLCM ------------------------------------------------------------------


def glcm_counts(gray, center, window, offset, levels):
    """Pair counts for one window: pure-python double loop over pixels."""
    r = window // 2
    cy, cx = center
    h, w = gray.shape
    r0, r1 = max(0, cy - r), min(h, cy + r + 1)
    c0, c1 = max(0, cx - r), min(w, cx + r + 1)
    dr, dc = offset
    counts = np.zeros((levels, levels), dtype=np.int64)
    for y in range(r0, r1):
        for x in range(c0, c1):
            ny, nx = y + dr, x + dc
            if not (r0 <= ny < r1 and c0 <= nx < c1):
                continue
            a = int(gray[y, x])
            b = int(gray[ny, nx])
            if a < 0 or b < 0:
                continue
            counts[a, b] += 1
    return counts


def glcm_features_from_counts(counts):
    """Direct summation of the 13 feature formulas over one count matrix."""
    levels = counts.shape[0]
    n = counts.sum()
    if n == 0:
        return np.zeros(13)
    p = counts.astype(np.float64) / n
    lev = np.arange(levels, dtype=np.float64)
    i = lev[:, None]
    j = lev[None, :]
    pi = p.sum(axis=1)
    pj = p.sum(axis=0)
    mu_i = (lev * pi).sum()
    mu_j = (lev * pj).sum()
    var_i = ((lev - mu_i) ** 2 * pi).sum()
    var_j = ((lev - mu_j) ** 2 * pj).sum()

    contrast = (p * (i - j) ** 2).sum()
    dissimilarity = (p * np.abs(i - j)).sum()
    homogeneity = (p / (1.0 + (i - j) ** 2)).sum()
    asm = (p * p).sum()
    energy = math.sqrt(asm)
    entropy = -sum(
        v * math.log(v) for v in p.ravel() if v > 0
    )
    denom = math.sqrt(var_i * var_j)
    corr = float((p * (i - mu_i) * (j - mu_j)).sum() / denom) if denom > 0 else 0.0
    d = (i - mu_i) + (j - mu_j)
    d2 = d * d
    d3 = d2 * d
    d4 = d3 * d
    shade = (p * d3).sum()
    prom = (p * d4).sum()
    autocorr = (p * i * j).sum()
    return np.array([
        contrast, dissimilarity, homogeneity, energy, asm, entropy, corr,
        mu_i, var_i, p.max(), shade, prom, autocorr,
    ])


def glcm_stack(gray, window, levels, offsets):
    """Per-pixel 13-feature volumes for every offset: the full naive path."""
    h, w = gray.shape
    out = np.zeros((h, w, 13 * len(offsets)))
    for oi, off in enumerate(offsets):
        for y in range(h):
            for x in range(w):
                counts = glcm_counts(gray, (y, x), window, off, levels)
                out[y, x, oi * 13 : (oi + 1) * 13] = glcm_features_from_counts(counts)
    return out


def quantize_scalar(v, lo, hi, levels):
    v = min(max(v, lo), hi)
    lev = math.floor((v - lo) / (hi - lo) * levels)
    return min(lev, levels - 1)


# --- convolution -----------------------------------------------------------


def conv2d(x, w, b, stride=1, pad=0):
    """Direct quadruple-loop cross-correlation."""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for oc in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = b[oc]
                    for ic in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                acc += xp[ni, ic, i * stride + ki, j * stride + kj] * w[oc, ic, ki, kj]
                    y[ni, oc, i, j] = acc
    return y


def finite_difference_grad(f, x, h=1e-6):
    """Central finite differences of scalar f w.r.t. every element of x."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return g


def relative_error(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-30)
    return np.abs(a - b).max() / denom


# --- optimization ----------------------------------------------------------


def adam_scalar(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, theta0=0.0):
    """Scalar Adam recurrence, one update per gradient in sequence."""
    theta, m, v = theta0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta -= lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


# --- morphology and metrics --------------------------------------------------


def dilate(mask, kh, kw):
    h, w = mask.shape
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            hit = 0
            for dy in range(-(kh // 2), kh // 2 + 1):
                for dx in range(-(kw // 2), kw // 2 + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and mask[yy, xx]:
                        hit = 1
            out[y, x] = hit
    return out


def confusion_tally(pred, truth, valid=None):
    tp = fp = fn = tn = 0
    h, w = pred.shape
    for y in range(h):
        for x in range(w):
            if valid is not None and not valid[y, x]:
                continue
            p = bool(pred[y, x])
            t = bool(truth[y, x])
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def average_precision_sweep(conf, truth, valid=None):
    """Explicit descending sweep over every distinct confidence value."""
    if valid is not None:
        c = conf[valid.astype(bool)].ravel()
        t = truth[valid.astype(bool)].ravel().astype(bool)
    else:
        c = conf.ravel()
        t = truth.ravel().astype(bool)
    positives = int(t.sum())
    if positives == 0:
        return None
    ap = 0.0
    prev_recall = 0.0
    for v in sorted(set(c.tolist()), reverse=True):
        pred = c >= v
        tp = int((pred & t).sum())
        fp = int((pred & ~t).sum())
        precision = tp / (tp + fp)
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def accumulate_history(strips, nodata):
    """Per-pixel scan over the full history: latest valid value wins."""
    h, w = strips[0].shape
    out = []
    for t in range(len(strips)):
        frame = np.full((h, w), nodata, dtype=np.float32)
        for y in range(h):
            for x in range(w):
                for s in range(t, -1, -1):
                    if strips[s][y, x] != nodata:
                        frame[y, x] = strips[s][y, x]
                        break
        out.append(frame)
    return out

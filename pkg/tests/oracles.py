"""Independent reference implementations used as test oracles.

Each one is written as plainly as possible, in loops where that helps, and
shares no code with the package.
"""

import math

import numpy as np


def conv_direct(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for a in range(n):
        for q in range(o):
            for y in range(ho):
                for z in range(wo):
                    acc = 0.0 if b is None else b[q]
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[a, ch, y * stride + i, z * stride + j] * w[q, ch, i, j]
                    out[a, q, y, z] = acc
    return out


def tconv_scatter(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    full = np.zeros((n, o, (h - 1) * stride + kh, (wd - 1) * stride + kw))
    for a in range(n):
        for ch in range(c):
            for y in range(h):
                for z in range(wd):
                    full[a, :, y * stride:y * stride + kh, z * stride:z * stride + kw] += x[a, ch, y, z] * w[ch]
    out = full[:, :, pad:full.shape[2] - pad, pad:full.shape[3] - pad]
    if b is not None:
        out = out + b[None, :, None, None]
    return out


def adam_transcription(theta, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam, one scalar at a time."""
    theta = [float(v) for v in theta]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            theta[i] = theta[i] - lr * mhat / (vhat ** 0.5 + eps)
    return theta


def knn_exhaustive(values, k):
    """O(N^2) nearest-k mean fill; ties broken by row-major position."""
    rows, cols = values.shape
    valid = [(r, c) for r in range(rows) for c in range(cols) if np.isfinite(values[r, c])]
    out = values.copy()
    for r in range(rows):
        for c in range(cols):
            if np.isfinite(values[r, c]):
                continue
            ranked = sorted(valid, key=lambda rc: ((rc[0] - r) ** 2 + (rc[1] - c) ** 2, rc[0], rc[1]))
            out[r, c] = sum(values[p] for p in ranked[:k]) / k
    return out


def median_by_sort(series):
    """Median of the finite entries of ``series``; NaN when more than half are missing."""
    finite = sorted(v for v in series if not math.isnan(v))
    if 2 * (len(series) - len(finite)) > len(series) or not finite:
        return math.nan
    n = len(finite)
    mid = n // 2
    return finite[mid] if n % 2 else (finite[mid - 1] + finite[mid]) / 2.0


def metrics_direct(pred, target):
    """RMSE, MAE, MBE, R^2 and Pearson rho by their textbook formulas over finite pairs."""
    p = [float(a) for a, b in zip(np.ravel(pred), np.ravel(target)) if math.isfinite(a) and math.isfinite(b)]
    t = [float(b) for a, b in zip(np.ravel(pred), np.ravel(target)) if math.isfinite(a) and math.isfinite(b)]
    n = len(p)
    err = [a - b for a, b in zip(p, t)]
    rmse = math.sqrt(sum(e * e for e in err) / n)
    mae = sum(abs(e) for e in err) / n
    mbe = sum(err) / n
    tbar = sum(t) / n
    pbar = sum(p) / n
    ss_tot = sum((b - tbar) ** 2 for b in t)
    ss_res = sum(e * e for e in err)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    cov = sum((a - pbar) * (b - tbar) for a, b in zip(p, t))
    sp = math.sqrt(sum((a - pbar) ** 2 for a in p))
    st = math.sqrt(ss_tot)
    rho = cov / (sp * st) if sp > 0 and st > 0 else None
    return {"rmse_c": rmse, "mae_c": mae, "mbe_c": mbe, "r2": r2, "pearson_rho": rho, "n_pixels": n}


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def convlstm_gates(x, h, c, wx, wh, b):
    """ConvLSTM step written gate by gate, each gate with its own convolutions."""
    hid = h.shape[1]
    pad = wh.shape[2] // 2

    def pre(gate):
        sl = slice(gate * hid, (gate + 1) * hid)
        return conv_direct(x, wx[sl], b[sl], 1, pad) + conv_direct(h, wh[sl], None, 1, pad)

    i = _sig(pre(0))
    f = _sig(pre(1))
    o = _sig(pre(2))
    g = np.tanh(pre(3))
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new

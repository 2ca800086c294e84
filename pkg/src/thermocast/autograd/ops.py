"""Differentiable operators on NCHW tensors.

Only the operators needed by the U-Net and the ConvLSTM live here. There is
no broadcasting: elementwise binary ops require identical shapes and the only
implicit expansion is the per-channel bias of the convolutions.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from thermocast.autograd.tensor import Tensor
from thermocast.errors import ConfigurationError, UsageError


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (C*kh*kw, N*ho*wo), rows ordered (c, i, j)."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * ho * wo)


def _col2im(cols: np.ndarray, n: int, c: int, hp: int, wp: int,
            kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add inverse of :func:`_im2col`; returns (N, C, hp, wp)."""
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros((c, n, hp, wp))
    hs = (ho - 1) * stride + 1
    ws = (wo - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + hs : stride, j : j + ws : stride] += cols[:, i, j]
    return out.transpose(1, 0, 2, 3)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2-D cross-correlation.

    ``x`` is (N, Cin, H, W), ``weight`` is (Cout, Cin, kh, kw) and ``bias``
    (Cout,) or None.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if c != ci:
        raise ConfigurationError(f"conv2d: input has {c} channels, weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ConfigurationError(f"conv2d: bias shape {bias.shape} != ({o},)")
    if stride < 1 or padding < 0:
        raise ConfigurationError("conv2d: stride must be >= 1 and padding >= 0")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ConfigurationError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    w2 = weight.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g: np.ndarray):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = w2.T @ g2
            gxp = _col2im(dcols, n, c, hp, wp, kh, kw, stride, ho, wo)
            gx = np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + w])
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Fractionally-strided convolution, the input-gradient of :func:`conv2d`.

    ``weight`` is (Cin, Cout, kh, kw). Output extent is
    ``(H - 1) * stride - 2 * padding + kh``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError("conv2d_transpose expects 4-D input and weight")
    n, c, h, w = x.shape
    ci, o, kh, kw = weight.shape
    if c != ci:
        raise ConfigurationError(f"conv2d_transpose: input has {c} channels, weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ConfigurationError(f"conv2d_transpose: bias shape {bias.shape} != ({o},)")
    if stride < 1 or padding < 0:
        raise ConfigurationError("conv2d_transpose: stride must be >= 1 and padding >= 0")
    hf, wf = (h - 1) * stride + kh, (w - 1) * stride + kw
    ho, wo = hf - 2 * padding, wf - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"conv2d_transpose: non-positive output size {ho}x{wo}")

    x2 = x.data.transpose(1, 0, 2, 3).reshape(c, -1)
    w2 = weight.data.reshape(c, -1)
    cols = w2.T @ x2
    full = _col2im(cols, n, o, hf, wf, kh, kw, stride, h, w)
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g: np.ndarray):
        gf = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        gcols = _im2col(gf, kh, kw, stride, h, w)
        gx = None
        if x.requires_grad:
            gx = np.ascontiguousarray((w2 @ gcols).reshape(c, n, h, w).transpose(1, 0, 2, 3))
        gw = (x2 @ gcols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward, "conv2d_transpose")


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.

    The gradient goes to the first maximal element of each block in
    row-major order.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"maxpool2 expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"maxpool2 needs even spatial extents, got {h}x{w}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward(g: np.ndarray):
        gb = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "maxpool2")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, 0.0)
    return Tensor._from_op(out, (x,), lambda g: (g * pos,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise UsageError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    pos = x.data >= 0
    out = np.where(pos, x.data, slope * x.data)
    return Tensor._from_op(out, (x,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return Tensor._from_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return Tensor._from_op(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def square(x: Tensor) -> Tensor:
    return Tensor._from_op(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Tensor._from_op(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum")


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return Tensor._from_op(np.array(x.data.mean()), (x,),
                           lambda g: (np.full(shape, float(g) / n),), "mean")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    if not tensors:
        raise UsageError("concat_channels needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:1] != ref[:1] or t.shape[2:] != ref[2:]:
            raise ConfigurationError(f"concat_channels: shape mismatch {ref} vs {t.shape}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=1)

    def backward(g: np.ndarray):
        return tuple(g[:, bounds[k] : bounds[k + 1]] for k in range(len(tensors)))

    return Tensor._from_op(out, tuple(tensors), backward, "concat_channels")


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise UsageError(f"channel_slice [{start}:{stop}] out of range for {c} channels")
    out = np.ascontiguousarray(x.data[:, start:stop])

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "channel_slice")


def select(x: Tensor, axis: int, index: int) -> Tensor:
    """Pick one index along ``axis`` and drop that axis."""
    out = np.ascontiguousarray(np.take(x.data, index, axis=axis))

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        sl = [slice(None)] * x.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "select")

"""2-D cross-correlation with dilation, groups and zero "same" padding."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import ShapeError, Tensor, as_tensor, record, tally


def _gather(xp: np.ndarray, k: int, d: int, H: int, W: int) -> np.ndarray:
    N, C = xp.shape[:2]
    cols = np.empty((N, C, k, k, H, W), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i * d:i * d + H, j * d:j * d + W]
    return cols


def _scatter(cols: np.ndarray, k: int, d: int, H: int, W: int, pad: int) -> np.ndarray:
    N, C = cols.shape[:2]
    xp = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i * d:i * d + H, j * d:j * d + W] += cols[:, :, i, j]
    return xp[:, :, pad:pad + H, pad:pad + W]


def conv2d(x, weight, bias=None, dilation: int = 1, groups: int = 1,
           padding: str = "same") -> Tensor:
    """Cross-correlate an NCHW input with an (O, C/groups, k, k) kernel.

    Output spatial size always equals input spatial size.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    if dilation < 1 or groups < 1:
        raise ValueError(f"dilation and groups must be >= 1, got {dilation}, {groups}")
    if padding != "same":
        raise ValueError(f"only 'same' zero padding is supported, got {padding!r}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIKK weight, got {x.shape}, {weight.shape}")
    if x.is_complex or weight.is_complex:
        raise TypeError("conv2d operates on real tensors")
    N, C, H, W = x.shape
    O, Cg, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {k}x{k2}")
    if C % groups or O % groups:
        raise ShapeError(f"channels ({C} in, {O} out) not divisible by groups={groups}")
    if Cg != C // groups:
        raise ShapeError(f"weight expects {Cg * groups} input channels, input has {C}")
    if bias is not None and bias.shape != (O,):
        raise ShapeError(f"bias shape {bias.shape} does not match {O} output channels")

    G, Og, ckk = groups, O // groups, Cg * k * k
    pad = dilation * (k - 1) // 2
    if k == 1:
        cols = x.data.reshape(N, G, ckk, H * W)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = _gather(xp, k, dilation, H, W).reshape(N, G, ckk, H * W)
    wm = weight.data.reshape(G, Og, ckk)
    out = np.matmul(wm, cols).reshape(N, O, H, W)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    tally("conv", N * O * H * W * ckk)

    def vjp(g):
        go = g.reshape(N, G, Og, H * W)
        gw = np.matmul(go, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(wm.transpose(0, 2, 1), go)
            if k == 1:
                gx = gcols.reshape(N, C, H, W)
            else:
                gx = _scatter(gcols.reshape(N, C, k, k, H, W), k, dilation, H, W, pad)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", out, inputs, vjp)


def depthwise_conv2d(x, weight, bias: Optional[Tensor] = None, dilation: int = 1) -> Tensor:
    """Per-channel convolution; ``weight`` is (C, 1, k, k)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"depthwise_conv2d expects NCHW input, got {x.shape}")
    return conv2d(x, weight, bias, dilation=dilation, groups=x.shape[1])

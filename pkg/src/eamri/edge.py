"""Ground-truth edge maps (Sobel, Canny) and the edge prediction network."""
from __future__ import annotations

from collections import Counter
from typing import Optional

import numpy as np
from scipy import ndimage

from .tensor import Conv, ParamStore, Tensor, ops
from .tensor.core import ShapeError

# instrumentation: how often the learned edge path ran
calls: Counter = Counter()

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel x/y responses over the last two axes, edge-replicated borders."""
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape[-2:]
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(img, pad, mode="edge")
    gx = np.zeros(img.shape)
    gy = np.zeros(img.shape)
    for i in range(3):
        for j in range(3):
            window = p[..., i:i + H, j:j + W]
            gx += SOBEL_X[i, j] * window
            gy += SOBEL_Y[i, j] * window
    return gx, gy


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    gx, gy = sobel_gradients(img)
    return np.hypot(gx, gy)


def _normalize(mag: np.ndarray) -> np.ndarray:
    peak = mag.max(axis=(-2, -1), keepdims=True)
    return np.divide(mag, peak, out=np.zeros_like(mag), where=peak > 0)


def sobel_edges(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude scaled by its own maximum into [0, 1]."""
    return _normalize(sobel_magnitude(img))


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    H, W = mag.shape
    p = np.pad(mag, 1)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4
    # (row, col) offset of the neighbour lying along the gradient for each sector
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    out = np.zeros_like(mag)
    for s, (dr, dc) in offsets.items():
        fwd = p[1 + dr:1 + dr + H, 1 + dc:1 + dc + W]
        bwd = p[1 - dr:1 - dr + H, 1 - dc:1 - dc + W]
        # asymmetric tie-break keeps exactly one pixel of a flat-topped ridge
        keep = (sector == s) & (mag >= bwd) & (mag > fwd)
        out[keep] = mag[keep]
    return out


def canny_edges(img: np.ndarray, low: float = 0.1, high: float = 0.3) -> np.ndarray:
    """Binary Canny map: Sobel gradient, non-maximum suppression, hysteresis.

    Thresholds are fractions of the maximum gradient magnitude.
    """
    if not low < high:
        raise ValueError(f"canny needs low < high, got low={low}, high={high}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        return np.stack([canny_edges(im, low, high) for im in img.reshape(-1, *img.shape[-2:])]
                        ).reshape(img.shape)
    gx, gy = sobel_gradients(img)
    mag = _normalize(np.hypot(gx, gy))
    thin = _non_max_suppression(mag, gx, gy)
    strong = thin >= high
    weak = (thin >= low) & (thin > 0)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros_like(mag)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels].astype(np.float64)


def edge_operator(name: str):
    if name == "sobel":
        return sobel_edges
    if name == "canny":
        return canny_edges
    raise ValueError(f"unknown edge operator {name!r} (expected 'sobel' or 'canny')")


class Msrb:
    """Two-branch multi-scale residual block (dilation 1 and 2 paths, cross-fused)."""

    def __init__(self, store: ParamStore, name: str, channels: int, rng: np.random.Generator):
        c = channels
        self.channels = c
        self.p1 = Conv(store, f"{name}.p1", c, c, 3, dilation=1, rng=rng)
        self.s1 = Conv(store, f"{name}.s1", c, c, 3, dilation=2, rng=rng)
        self.p2 = Conv(store, f"{name}.p2", 2 * c, 2 * c, 3, dilation=1, rng=rng)
        self.s2 = Conv(store, f"{name}.s2", 2 * c, 2 * c, 3, dilation=2, rng=rng)
        self.fuse = Conv(store, f"{name}.fuse", 4 * c, c, 1, zero=True)


def msrb_forward(x: Tensor, block: Msrb) -> Tensor:
    if x.ndim != 4 or x.shape[1] != block.channels:
        raise ShapeError(f"MSRB expects N x {block.channels} x H x W, got {x.shape}")
    p1 = ops.relu(block.p1(x))
    s1 = ops.relu(block.s1(x))
    p2 = ops.relu(block.p2(ops.concat_channels([p1, s1])))
    s2 = ops.relu(block.s2(ops.concat_channels([s1, p1])))
    return ops.add(x, block.fuse(ops.concat_channels([p2, s2])))


class EpnNet:
    """Head conv, a chain of MSRBs, 1x1 fusion of every MSRB output, tail conv to 1 channel."""

    def __init__(self, store: ParamStore, name: str = "epn", channels: int = 32,
                 n_msrb: int = 3, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.head = Conv(store, f"{name}.head", 2, channels, 3, rng=rng)
        self.msrbs = [Msrb(store, f"{name}.msrb{i}", channels, rng) for i in range(n_msrb)]
        self.fuse = Conv(store, f"{name}.fuse", n_msrb * channels, channels, 1, rng=rng)
        self.tail = Conv(store, f"{name}.tail", channels, 1, 3, rng=rng)


def epn_forward(x_2ch: Tensor, epn: EpnNet) -> Tensor:
    """Predict an N x 1 x H x W edge map in [0, 1] from a 2-channel image."""
    if x_2ch.ndim != 4 or x_2ch.shape[1] != 2:
        raise ShapeError(f"EPN expects N x 2 x H x W input, got {x_2ch.shape}")
    calls["epn_forward"] += 1
    h = epn.head(x_2ch)
    outs = []
    for block in epn.msrbs:
        h = msrb_forward(h, block)
        outs.append(h)
    h = epn.fuse(ops.concat_channels(outs))
    return ops.sigmoid(epn.tail(h))

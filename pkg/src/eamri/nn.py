"""Recursive dilated convolution blocks shared by the SME refiner and the RDCN cascades."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Conv, ParamStore, Tensor, ops

DCB_DILATIONS = (1, 2, 4)


class Dcb:
    """3x3 convs at dilations 1, 2, 4 (ReLU between them) with an identity skip."""

    def __init__(self, store: ParamStore, name: str, channels: int, rng: np.random.Generator,
                 dilations: Sequence[int] = DCB_DILATIONS):
        self.convs = [Conv(store, f"{name}.conv{i}", channels, channels, 3, dilation=d, rng=rng)
                      for i, d in enumerate(dilations)]

    def __call__(self, h: Tensor) -> Tensor:
        out = h
        for i, conv in enumerate(self.convs):
            out = conv(out)
            if i < len(self.convs) - 1:
                out = ops.relu(out)
        return ops.add(h, out)


class RdcnBlock:
    """Lift 2 -> C, apply one weight-shared DCB ``recursions`` times, project C -> 2.

    The projection starts at zero so a fresh block is the identity map.
    """

    def __init__(self, store: ParamStore, name: str, channels: int, recursions: int,
                 rng: np.random.Generator):
        if recursions < 1:
            raise ValueError(f"recursions must be >= 1, got {recursions}")
        self.channels = channels
        self.recursions = recursions
        self.lift = Conv(store, f"{name}.lift", 2, channels, 3, rng=rng)
        self.dcb = Dcb(store, f"{name}.dcb", channels, rng)
        self.project = Conv(store, f"{name}.project", channels, 2, 3, zero=True)

    def refine(self, x_2ch: Tensor) -> Tensor:
        h = self.lift(x_2ch)
        agg = h
        for _ in range(self.recursions):
            h = self.dcb(h)
            agg = ops.add(agg, h)
        return ops.add(x_2ch, self.project(agg))

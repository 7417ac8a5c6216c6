"""Learnable coil sensitivity estimation from the auto-calibration region."""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from . import mri
from .nn import RdcnBlock
from .tensor import Tensor, as_tensor, ifft2c, ops

DIVISION_FLOOR = 1e-8


class SmeNet:
    """Narrow recursive dilated refiner applied to every coil image separately."""

    def __init__(self, store, name: str = "sme", channels: int = 8, recursions: int = 3,
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.refiner = RdcnBlock(store, f"{name}.refiner", channels, recursions, rng)


def acs_mask(mask: Union[mri.SamplingMask, Sequence[mri.SamplingMask]]) -> np.ndarray:
    if isinstance(mask, mri.SamplingMask):
        return mask.acs_array()
    return np.stack([m.acs_array() for m in mask])


def estimate_sensitivities(y, mask, sme_net: SmeNet) -> Tensor:
    """Coil maps S (..., n_coils, H, W) with sum_i |S_i|^2 == 1 at every pixel.

    ACS-only k-space -> coil images -> refined / RSS -> pixelwise renormalisation.
    """
    y = as_tensor(y)
    acs = acs_mask(mask)
    if not acs.any():
        raise ValueError("sampling mask has an empty ACS region")
    coil = ifft2c(ops.mul(y, acs))
    denom = ops.clamp_min(mri.rss(coil), DIVISION_FLOOR)

    H, W = coil.shape[-2:]
    flat = ops.reshape(coil, (-1, H, W))
    refined = sme_net.refiner.refine(ops.two_channel_from_complex(flat))
    refined = ops.reshape(ops.complex_from_two_channel(refined), coil.shape)

    lead = denom.shape[:-2] + (1, H, W)
    S = ops.div(refined, ops.reshape(denom, lead))
    norm = ops.clamp_min(mri.rss(S), DIVISION_FLOOR)
    return ops.div(S, ops.reshape(norm, lead))

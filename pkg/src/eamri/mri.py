"""Acquisition physics: Cartesian masks, the multi-coil forward operator,
SENSE reduce/expand, RSS, zero-filling and the data-consistency projection.

Shapes: images are ``(..., H, W)`` complex, coil stacks and k-space are
``(..., n_coils, H, W)``, masks broadcast as ``(..., 1, 1, W)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import Tensor, as_tensor, fft2c, ifft2c, ops
from .tensor.core import ShapeError

DEFAULT_CENTER_FRACTION = {4: 0.08, 6: 0.06}


@dataclass(frozen=True)
class SamplingMask:
    """Column mask of width W; ``acs`` is the half-open fully-sampled centre range."""

    columns: np.ndarray
    acs: tuple[int, int]

    @property
    def width(self) -> int:
        return self.columns.size

    @property
    def n_sampled(self) -> int:
        return int(self.columns.sum())

    def as_array(self) -> np.ndarray:
        """Float mask shaped (1, 1, W) so it broadcasts over coils and rows."""
        return self.columns.astype(np.float64).reshape(1, 1, -1)

    def acs_array(self) -> np.ndarray:
        cols = np.zeros(self.width)
        cols[self.acs[0]:self.acs[1]] = 1.0
        return cols.reshape(1, 1, -1)


def make_cartesian_mask(width: int, af: float, center_fraction: Optional[float] = None,
                        seed: int = 0) -> SamplingMask:
    """Random Cartesian column mask with a fully sampled centre block.

    ``round(width / af)`` columns are kept in total, ``ceil(center_fraction * width)``
    of them contiguous around the k-space centre; the rest are drawn uniformly
    without replacement from the remaining columns.
    """
    if width < 1:
        raise ValueError(f"mask width must be positive, got {width}")
    if af < 1:
        raise ValueError(f"acceleration factor must be >= 1, got {af}")
    if af == 1:
        return SamplingMask(np.ones(width, dtype=bool), (0, width))
    if center_fraction is None:
        if af not in DEFAULT_CENTER_FRACTION:
            raise ValueError(f"no default center fraction for af={af}; pass one explicitly")
        center_fraction = DEFAULT_CENTER_FRACTION[af]
    if not 0 < center_fraction < 1.0 / af:
        raise ValueError(f"center_fraction must lie in (0, 1/af) = (0, {1.0 / af:.4f}), "
                         f"got {center_fraction}")
    n_total = int(math.floor(width / af + 0.5))
    n_acs = math.ceil(center_fraction * width)
    if n_acs > n_total:
        raise ValueError(f"{n_acs} ACS columns exceed the {n_total}-column budget")
    start = (width - n_acs + 1) // 2
    columns = np.zeros(width, dtype=bool)
    columns[start:start + n_acs] = True
    rng = np.random.default_rng(seed)
    free = np.flatnonzero(~columns)
    columns[rng.choice(free, size=n_total - n_acs, replace=False)] = True
    return SamplingMask(columns, (start, start + n_acs))


@dataclass
class KSpaceSample:
    """One example: undersampled multi-coil k-space plus its ground truth."""

    y: np.ndarray
    mask: SamplingMask
    x_gt: np.ndarray
    edge_gt: np.ndarray
    coil_maps: Optional[np.ndarray] = None


def collate(samples: Sequence[KSpaceSample]):
    """Stack samples into (y, masks, x_gt, edge_gt) batch arrays."""
    if not samples:
        raise ValueError("cannot collate an empty batch")
    y = np.stack([s.y for s in samples])
    x_gt = np.stack([s.x_gt for s in samples])
    e_gt = np.stack([s.edge_gt for s in samples])
    return y, [s.mask for s in samples], x_gt, e_gt


MaskLike = Union[SamplingMask, Sequence[SamplingMask], np.ndarray, Tensor]


def mask_array(mask: MaskLike) -> np.ndarray:
    """Broadcastable float mask for one SamplingMask, a batch of them, or a raw array."""
    if isinstance(mask, SamplingMask):
        return mask.as_array()
    if isinstance(mask, Tensor):
        return mask.data
    if isinstance(mask, np.ndarray):
        return mask.astype(np.float64)
    return np.stack([m.as_array() for m in mask])


def _check_coils(S: Tensor, other: Tensor, what: str) -> None:
    if S.shape != other.shape:
        raise ShapeError(f"{what}: coil maps {S.shape} vs data {other.shape}")


def expand(S, x) -> Tensor:
    """(S_1 x, ..., S_nc x) for an image x of shape (..., H, W)."""
    S, x = as_tensor(S), as_tensor(x)
    if S.shape[:-3] + S.shape[-2:] != x.shape:
        raise ShapeError(f"expand: coil maps {S.shape} incompatible with image {x.shape}")
    return ops.mul(S, ops.reshape(x, x.shape[:-2] + (1,) + x.shape[-2:]))


def reduce(S, coil_images) -> Tensor:
    """Pixelwise sum_i conj(S_i) x_i."""
    S, coil_images = as_tensor(S), as_tensor(coil_images)
    _check_coils(S, coil_images, "reduce")
    return ops.sum(ops.mul(ops.conj(S), coil_images), axis=-3)


def rss(coil_images) -> Tensor:
    """Root sum of squares over the coil axis."""
    return ops.sqrt(ops.sum(ops.abs2(coil_images), axis=-3))


def forward_model(x, S, mask: MaskLike, sigma: float = 0.0,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """y_i = M * F(S_i x) + eps_i, with eps complex Gaussian of std ``sigma`` per component."""
    m = mask_array(mask)
    k = fft2c(expand(S, x))
    if sigma > 0:
        rng = rng if rng is not None else np.random.default_rng()
        noise = sigma * (rng.standard_normal(k.shape) + 1j * rng.standard_normal(k.shape))
        k = ops.add(k, noise)
    return ops.mul(k, m)


def zero_filled(y, S) -> Tensor:
    return reduce(S, ifft2c(y))


def data_consistency(x_in, y, mask: MaskLike, S) -> Tensor:
    """R(S, F^-1((1 - M) F(E(x_in)) + M y)): keep measured k-space, fill the rest."""
    y = as_tensor(y)
    m = mask_array(mask)
    k = fft2c(expand(S, x_in))
    _check_coils(as_tensor(S), y, "data_consistency")
    k = ops.add(ops.mul(k, 1.0 - m), ops.mul(y, m))
    return reduce(S, ifft2c(k))

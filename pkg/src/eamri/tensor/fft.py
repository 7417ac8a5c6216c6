"""Centered, orthonormal 2-D Fourier transforms over the last two axes."""
from __future__ import annotations

import numpy as np

from .core import ShapeError, Tensor, as_tensor, record

_AXES = (-2, -1)


def _fft2c(a: np.ndarray) -> np.ndarray:
    a = np.fft.ifftshift(a, axes=_AXES)
    a = np.fft.fft2(a, axes=_AXES, norm="ortho")
    return np.fft.fftshift(a, axes=_AXES)


def _ifft2c(a: np.ndarray) -> np.ndarray:
    a = np.fft.ifftshift(a, axes=_AXES)
    a = np.fft.ifft2(a, axes=_AXES, norm="ortho")
    return np.fft.fftshift(a, axes=_AXES)


def _check(x: Tensor) -> None:
    if x.ndim < 2:
        raise ShapeError(f"fft2c needs at least 2 dims, got shape {x.shape}")


def fft2c(x) -> Tensor:
    x = as_tensor(x)
    _check(x)
    # unitary: the adjoint is the inverse
    return record("fft2c", _fft2c(x.data), (x,), lambda g: (_ifft2c(g),))


def ifft2c(k) -> Tensor:
    k = as_tensor(k)
    _check(k)
    return record("ifft2c", _ifft2c(k.data), (k,), lambda g: (_fft2c(g),))

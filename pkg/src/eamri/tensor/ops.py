"""Differentiable elementwise, reduction and shape operations."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import ShapeError, Tensor, as_tensor, record, tally


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = a.data * b.data
    tally("mul", out.size)
    return record("mul", out, (a, b), lambda g: (g * np.conj(b.data), g * np.conj(a.data)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data
    tally("mul", out.size)

    def vjp(g):
        ga = g / np.conj(b.data)
        return ga, -ga * np.conj(out)

    return record("div", out, (a, b), vjp)


def scale(x, c) -> Tensor:
    """Multiply by a constant Python/numpy scalar (not differentiated)."""
    x = as_tensor(x)
    out = x.data * c
    tally("mul", out.size)
    return record("scale", out, (x,), lambda g: (g * np.conj(c),))


def conj(x) -> Tensor:
    x = as_tensor(x)
    return record("conj", np.conj(x.data), (x,), lambda g: (np.conj(g),))


def absolute(x) -> Tensor:
    """|x| for real or complex input; the subgradient at 0 is taken as 0."""
    x = as_tensor(x)
    out = np.abs(x.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * x.data / safe, 0.0),)

    return record("abs", out, (x,), vjp)


magnitude = absolute


def abs2(x) -> Tensor:
    """Squared magnitude ``re^2 + im^2`` (real output)."""
    x = as_tensor(x)
    out = (x.data * np.conj(x.data)).real
    tally("mul", out.size)
    return record("abs2", out, (x,), lambda g: (2.0 * g * x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if x.is_complex:
        raise TypeError("sqrt expects a real tensor")
    out = np.sqrt(x.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return record("sqrt", out, (x,), vjp)


def clamp_min(x, floor: float) -> Tensor:
    x = as_tensor(x)
    keep = x.data >= floor
    return record("clamp_min", np.where(keep, x.data, floor), (x,), lambda g: (g * keep,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return record("relu", x.data * pos, (x,), lambda g: (g * pos,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return record("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.is_complex:
        raise TypeError("softmax expects a real tensor")
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} out of range for {x.ndim}-d input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    tally("softmax", out.size)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (x,), vjp)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return record("sum", out, (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    tally("matmul", out.size * a.shape[-1])

    def vjp(g):
        ga = np.matmul(g, np.conj(np.swapaxes(b.data, -1, -2)))
        gb = np.matmul(np.conj(np.swapaxes(a.data, -1, -2)), g)
        return ga, gb

    return record("matmul", out, (a, b), vjp)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    return record("swapaxes", np.swapaxes(x.data, a1, a2), (x,),
                  lambda g: (np.swapaxes(g, a1, a2),))


def index(x, key) -> Tensor:
    x = as_tensor(x)

    def vjp(g):
        full = np.zeros(x.shape, dtype=np.result_type(g, x.data))
        np.add.at(full, key, g)
        return (full,)

    return record("index", x.data[key], (x,), vjp)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as err:
        raise ShapeError(f"concat: {err}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record("concat", out, tuple(tensors),
                  lambda g: tuple(np.split(g, bounds, axis=axis)))


def concat_channels(tensors: Sequence) -> Tensor:
    return concat(tensors, axis=1)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                for t in tensors]
    return concat(expanded, axis=axis)


def two_channel_from_complex(z) -> Tensor:
    """(..., H, W) complex -> (..., 2, H, W) real with channels (re, im)."""
    z = as_tensor(z)
    if not z.is_complex:
        raise TypeError("two_channel_from_complex expects a complex tensor")
    out = np.stack([z.data.real, z.data.imag], axis=-3)

    def vjp(g):
        return (g[..., 0, :, :] + 1j * g[..., 1, :, :],)

    return record("to_2ch", out, (z,), vjp)


def complex_from_two_channel(x) -> Tensor:
    """(..., 2, H, W) real -> (..., H, W) complex."""
    x = as_tensor(x)
    if x.is_complex or x.ndim < 3 or x.shape[-3] != 2:
        raise ShapeError(f"expected a real (..., 2, H, W) tensor, got {x.shape}")
    out = x.data[..., 0, :, :] + 1j * x.data[..., 1, :, :]

    def vjp(g):
        return (np.stack([g.real, g.imag], axis=-3),)

    return record("from_2ch", out, (x,), vjp)


def l1_mean(a, b) -> Tensor:
    return mean(absolute(sub(a, b)))


"""Tensor container, execution trace and reverse-mode replay.

Real tensors hold float64 arrays, complex tensors hold complex128 arrays
(interleaved re/im float64 pairs in memory). Gradients of complex tensors use
the ``dL/dRe + i dL/dIm`` convention, so for any linear map ``y = A x`` the
vector-Jacobian product is ``A^H g`` and for ``y = a * b`` it is
``g * conj(b)``.
"""
from __future__ import annotations

import contextlib
import contextvars
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_ACTIVE_TRACE: contextvars.ContextVar[Optional["Trace"]] = contextvars.ContextVar(
    "eamri_active_trace", default=None
)
_ACTIVE_COUNTER: contextvars.ContextVar[Optional[Counter]] = contextvars.ContextVar(
    "eamri_active_counter", default=None
)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128, copy=False)
    return arr.astype(np.float64, copy=False)


class Tensor:
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        kind = "complex" if self.is_complex else "real"
        return f"Tensor({kind}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, resolved lazily to avoid an import cycle with ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.index(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A named learnable tensor with a gradient slot of identical shape."""

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        if self.is_complex:
            raise TypeError(f"parameter {name!r} must be real")
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(eq=False)
class Record:
    op: str
    inputs: tuple
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Trace:
    """Ordered log of executed differentiable operations.

    Operations are recorded only while a trace is active (``with Trace() as t``)
    and at least one operand requires a gradient.
    """

    def __init__(self):
        self.records: list[Record] = []
        self._tokens: list = []

    def __enter__(self) -> "Trace":
        self._tokens.append(_ACTIVE_TRACE.set(self))
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TRACE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def active_trace() -> Optional[Trace]:
    return _ACTIVE_TRACE.get()


def record(op: str, out_data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap ``out_data`` in a Tensor and log the op if a trace is listening."""
    out = Tensor(out_data)
    trace = _ACTIVE_TRACE.get()
    if trace is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        trace.records.append(Record(op, tuple(inputs), out, vjp))
    return out


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    """Undo broadcasting of ``g`` onto ``t.shape`` and drop imaginary parts for real ``t``."""
    shape = t.shape
    if g.shape != shape:
        extra = g.ndim - len(shape)
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if not t.is_complex and np.iscomplexobj(g):
        g = g.real
    return g


def backward(trace: Trace, loss: Tensor) -> None:
    """Replay ``trace`` in reverse and accumulate gradients into leaf tensors.

    Parameters receive ``grad += dloss/dparam``; other leaves that require a
    gradient get their ``grad`` set (or accumulated if already present).
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(trace.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            gi = _reduce_to(gi, inp)
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                leaves.setdefault(key, inp)
    for key, t in leaves.items():
        if key not in grads:
            continue
        if t.grad is None:
            t.grad = np.array(grads[key], copy=True)
        else:
            t.grad = t.grad + grads[key]


@contextlib.contextmanager
def count_ops() -> Iterator[Counter]:
    """Tally multiply(-add) counts per op kind for everything run inside the block."""
    counter: Counter = Counter()
    token = _ACTIVE_COUNTER.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE_COUNTER.reset(token)


def tally(kind: str, n: int) -> None:
    counter = _ACTIVE_COUNTER.get()
    if counter is not None:
        counter[kind] += int(n)

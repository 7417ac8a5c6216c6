"""Named parameter storage and the thin layer wrappers built on it."""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .conv import conv2d
from .core import Parameter, Tensor


class ParamStore:
    """Ordered mapping of unique names to :class:`Parameter` objects."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.array(value, dtype=np.float64))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def num_parameters(self, prefix: str = "") -> int:
        return sum(p.size for n, p in self._params.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = np.zeros_like(p.data)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for n, p in self._params.items():
            value = np.asarray(state[n], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{n}: shape {value.shape} != {p.shape}")
            p.data = value.copy()


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv:
    """A conv2d layer whose weight/bias live in a ParamStore.

    ``zero=True`` starts weight and bias at 0, used for the last projection in
    front of a residual add.
    """

    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int, k: int = 3,
                 dilation: int = 1, groups: int = 1, rng: Optional[np.random.Generator] = None,
                 zero: bool = False):
        self.dilation = dilation
        self.groups = groups
        shape = (out_ch, in_ch // groups, k, k)
        fan_in = (in_ch // groups) * k * k
        if zero:
            w, b = np.zeros(shape), np.zeros(out_ch)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            w = fan_in_uniform(rng, shape, fan_in)
            b = fan_in_uniform(rng, (out_ch,), fan_in)
        self.weight = store.add(f"{name}.weight", w)
        self.bias = store.add(f"{name}.bias", b)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, dilation=self.dilation, groups=self.groups)

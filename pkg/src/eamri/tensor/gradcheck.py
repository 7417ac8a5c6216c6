"""Central finite-difference checks for traced gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Tensor, Trace, backward


@dataclass
class GradCheckResult:
    name: str
    analytic: float
    numeric: float

    @property
    def rel_err(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        if scale < 1e-12:
            return 0.0
        return abs(self.analytic - self.numeric) / scale


def analytic_grads(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    for t in tensors:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    with Trace() as trace:
        loss = fn()
    backward(trace, loss)
    return [t.grad.copy() for t in tensors]


def _random_direction(rng: np.random.Generator, t: Tensor) -> np.ndarray:
    v = rng.standard_normal(t.shape)
    if t.is_complex:
        v = v + 1j * rng.standard_normal(t.shape)
    return v / max(np.linalg.norm(v), 1e-300)


def _eval(fn: Callable[[], Tensor]) -> float:
    return float(np.real(fn().data).sum())


# ops whose derivative jumps where a real input changes sign (or crosses the floor)
_KINKED = ("relu", "clamp_min", "abs")


def _probe(fn: Callable[[], Tensor]) -> tuple[float, list]:
    """Value of ``fn`` plus which side of its kink every relu/abs/clamp input lies on."""
    with Trace() as trace:
        value = float(np.real(fn().data).sum())
    pattern = []
    for rec in trace.records:
        if rec.op not in _KINKED or rec.inputs[0].is_complex:
            continue
        x = rec.inputs[0].data
        # clamp_min passes unclamped entries through unchanged
        pattern.append(x >= rec.output.data if rec.op == "clamp_min" else x > 0)
    return value, pattern


def _same(p: list, q: list) -> bool:
    return len(p) == len(q) and all(np.array_equal(a, b) for a, b in zip(p, q))


def _fd_along(fn, tensors, dirs, saved, h, avoid_kinks):
    """Finite-difference slope along ``dirs``, or None if every stencil hits a kink.

    Central difference when ``x +- hv`` stays on one smooth piece; otherwise the
    second-order one-sided stencil on whichever side is kink-free.
    """
    cache = {}

    def at(step):
        if step not in cache:
            for i, v in dirs.items():
                tensors[i].data = saved[i] + step * h * v
            cache[step] = _probe(fn)
            for i in dirs:
                tensors[i].data = saved[i]
        return cache[step]

    (fp, pp), (fm, pm) = at(1), at(-1)
    if not avoid_kinks:
        return (fp - fm) / (2 * h)
    f0, p0 = at(0)
    if _same(pp, p0) and _same(pm, p0):
        return (fp - fm) / (2 * h)
    for sign in (1, -1):
        f1, p1 = at(sign)
        if _same(p1, p0):
            f2, p2 = at(2 * sign)
            if _same(p2, p0):
                return sign * (-3 * f0 + 4 * f1 - f2) / (2 * h)
    return None


def directional_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor],
                      names: Optional[Sequence[str]] = None, h: float = 1e-5,
                      n_dirs: int = 1, seed: int = 0, per_tensor: bool = True,
                      avoid_kinks: bool = True, max_redraws: int = 25) -> list[GradCheckResult]:
    """Compare ``<grad, v>`` against a finite difference of step ``h`` along random ``v``.

    With ``per_tensor`` each tensor is perturbed on its own, so every tensor
    gets its own verdict; otherwise one joint direction is used.

    A central difference is meaningless when the segment ``x +- hv`` straddles a
    relu/abs/clamp kink. With ``avoid_kinks`` such a direction falls back to a
    one-sided second-order stencil on the smooth side, or is redrawn if both
    sides are kinked (h stays fixed).
    """
    rng = np.random.default_rng(seed)
    names = list(names) if names is not None else [f"t{i}" for i in range(len(tensors))]
    grads = analytic_grads(fn, tensors)
    groups = [[i] for i in range(len(tensors))] if per_tensor else [list(range(len(tensors)))]
    results = []
    for group in groups:
        saved = {i: tensors[i].data.copy() for i in group}
        for _ in range(n_dirs):
            for _attempt in range(max_redraws + 1):
                dirs = {i: _random_direction(rng, tensors[i]) for i in group}
                numeric = _fd_along(fn, tensors, dirs, saved, h, avoid_kinks)
                if numeric is not None:
                    break
            else:
                # kinks everywhere: report the raw central difference
                numeric = _fd_along(fn, tensors, dirs, saved, h, False)
            analytic = sum(float(np.real(np.vdot(grads[i], dirs[i]))) for i in group)
            label = names[group[0]] if per_tensor else "joint"
            results.append(GradCheckResult(label, analytic, numeric))
    return results


def numerical_gradient(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Element-by-element central differences; only for small tensors."""
    saved = t.data.copy()
    grad = np.zeros_like(saved)
    flat = t.data.reshape(-1)
    for idx in range(flat.size):
        steps = [1.0, 1j] if t.is_complex else [1.0]
        for step in steps:
            work = saved.copy().reshape(-1)
            work[idx] = saved.reshape(-1)[idx] + h * step
            t.data = work.reshape(saved.shape)
            f_plus = _eval(fn)
            work[idx] = saved.reshape(-1)[idx] - h * step
            t.data = work.reshape(saved.shape)
            f_minus = _eval(fn)
            d = (f_plus - f_minus) / (2 * h)
            grad.reshape(-1)[idx] += d * step
    t.data = saved
    return grad


def max_rel_err(results: Sequence[GradCheckResult]) -> float:
    return max((r.rel_err for r in results), default=0.0)

"""Finite-difference gradient suite shared by the CLI and the test-suite."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import mri
from ..config import ReconConfig
from ..edge import Msrb, msrb_forward
from ..recon import EamBlock, build_variant, edge_attention, model_forward
from ..sme import estimate_sensitivities
from ..tensor import GradCheckResult, Tensor, conv2d, depthwise_conv2d, directional_check, fft2c, ifft2c, ops
from ..tensor.params import ParamStore
from ..training import total_loss

OP_TOL = 1e-5
MODEL_TOL = 1e-4


@dataclass
class SuiteReport:
    ops: list = field(default_factory=list)
    model: list = field(default_factory=list)

    @property
    def op_max(self) -> float:
        return max((r.rel_err for r in self.ops), default=0.0)

    @property
    def model_max(self) -> float:
        return max((r.rel_err for r in self.model), default=0.0)

    @property
    def passed(self) -> bool:
        return self.op_max < OP_TOL and self.model_max < MODEL_TOL

    def failures(self) -> list[GradCheckResult]:
        return ([r for r in self.ops if r.rel_err >= OP_TOL]
                + [r for r in self.model if r.rel_err >= MODEL_TOL])


def _away(rng, shape, margin=0.2) -> np.ndarray:
    # keeps values clear of the kinks in relu/abs/clamp
    v = rng.standard_normal(shape)
    return np.sign(v) * (margin + np.abs(v))


def _cplx(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _probe(out: Tensor, weight: np.ndarray) -> Tensor:
    # random linear read-out so every output element matters
    return ops.sum(ops.mul(out, weight))


def op_cases(rng: np.random.Generator) -> list[tuple[str, Callable, list]]:
    """``(name, fn(*tensors) -> output, tensors)`` for each differentiable op."""
    T = lambda a: Tensor(a, requires_grad=True)  # noqa: E731

    def coil_maps(n, h, w):
        s = _cplx(rng, (n, h, w))
        return s / np.sqrt((np.abs(s) ** 2).sum(0, keepdims=True))

    maps = coil_maps(3, 6, 6)
    mask = mri.make_cartesian_mask(6, 2, 0.2, seed=1)
    y = mri.forward_model(_cplx(rng, (6, 6)), maps, mask).data
    store = ParamStore()
    msrb = Msrb(store, "msrb", 4, rng)
    eam = EamBlock(store, "eam", 4, 2, rng)
    for _, p in store.items():
        p.data = 0.3 * rng.standard_normal(p.shape)

    cases = [
        ("add", ops.add, [T(rng.standard_normal((3, 4))), T(rng.standard_normal((4,)))]),
        ("sub", ops.sub, [T(_cplx(rng, (3, 4))), T(rng.standard_normal((3, 1)))]),
        ("mul", ops.mul, [T(_cplx(rng, (3, 4))), T(_cplx(rng, (3, 4)))]),
        ("mul_real_complex", ops.mul, [T(rng.standard_normal((2, 3))), T(_cplx(rng, (2, 3)))]),
        ("div", ops.div, [T(_cplx(rng, (3, 4))), T(_away(rng, (3, 4), 0.5))]),
        ("scale", lambda x: ops.scale(x, 0.7 - 0.2j), [T(_cplx(rng, (3, 4)))]),
        ("conj", ops.conj, [T(_cplx(rng, (3, 4)))]),
        ("magnitude", ops.absolute, [T(_cplx(rng, (3, 4)))]),
        ("abs_real", ops.absolute, [T(_away(rng, (3, 4)))]),
        ("abs2", ops.abs2, [T(_cplx(rng, (3, 4)))]),
        ("sqrt", ops.sqrt, [T(np.abs(rng.standard_normal((3, 4))) + 0.5)]),
        ("clamp_min", lambda x: ops.clamp_min(x, 0.0), [T(_away(rng, (3, 4)))]),
        ("relu", ops.relu, [T(_away(rng, (3, 4)))]),
        ("sigmoid", ops.sigmoid, [T(3 * rng.standard_normal((3, 4)))]),
        ("softmax", lambda x: ops.softmax(x, axis=-1), [T(rng.standard_normal((2, 3, 5)))]),
        ("sum", lambda x: ops.sum(x, axis=1, keepdims=True), [T(_cplx(rng, (3, 4)))]),
        ("mean", lambda x: ops.mean(x, axis=0), [T(rng.standard_normal((3, 4)))]),
        ("matmul", ops.matmul, [T(_cplx(rng, (2, 3, 4))), T(_cplx(rng, (2, 4, 5)))]),
        ("matmul_real", ops.matmul, [T(rng.standard_normal((3, 4))), T(rng.standard_normal((4, 2)))]),
        ("reshape", lambda x: ops.reshape(x, (6, 2)), [T(rng.standard_normal((3, 4)))]),
        ("transpose", lambda x: ops.transpose(x, (2, 0, 1)), [T(rng.standard_normal((2, 3, 4)))]),
        ("swapaxes", lambda x: ops.swapaxes(x, 0, 2), [T(rng.standard_normal((2, 3, 4)))]),
        ("index", lambda x: ops.index(x, (slice(None), slice(1, 3))), [T(_cplx(rng, (3, 4)))]),
        ("concat", lambda a, b: ops.concat([a, b], axis=1),
         [T(rng.standard_normal((2, 3, 4))), T(rng.standard_normal((2, 1, 4)))]),
        ("stack", lambda a, b: ops.stack([a, b], axis=1),
         [T(rng.standard_normal((2, 4))), T(rng.standard_normal((2, 4)))]),
        ("two_channel_from_complex", ops.two_channel_from_complex, [T(_cplx(rng, (2, 3, 4)))]),
        ("complex_from_two_channel", ops.complex_from_two_channel,
         [T(rng.standard_normal((2, 2, 3, 4)))]),
        ("l1_mean", ops.l1_mean, [T(rng.standard_normal((3, 4))), T(rng.standard_normal((3, 4)) + 3)]),
        ("conv2d", lambda x, w, b: conv2d(x, w, b, dilation=2),
         [T(rng.standard_normal((2, 3, 7, 6))), T(rng.standard_normal((4, 3, 3, 3))),
          T(rng.standard_normal(4))]),
        ("conv2d_grouped", lambda x, w: conv2d(x, w, groups=2),
         [T(rng.standard_normal((1, 4, 5, 5))), T(rng.standard_normal((6, 2, 3, 3)))]),
        ("conv2d_1x1", lambda x, w: conv2d(x, w),
         [T(rng.standard_normal((2, 3, 4, 4))), T(rng.standard_normal((5, 3, 1, 1)))]),
        ("depthwise_conv2d", lambda x, w, b: depthwise_conv2d(x, w, b),
         [T(rng.standard_normal((2, 3, 5, 5))), T(rng.standard_normal((3, 1, 3, 3))),
          T(rng.standard_normal(3))]),
        ("fft2c", fft2c, [T(_cplx(rng, (2, 4, 6)))]),
        ("ifft2c", ifft2c, [T(_cplx(rng, (2, 6, 4)))]),
        ("expand", mri.expand, [T(maps), T(_cplx(rng, (6, 6)))]),
        ("reduce", mri.reduce, [T(maps), T(_cplx(rng, (3, 6, 6)))]),
        ("rss", mri.rss, [T(_cplx(rng, (3, 6, 6)))]),
        ("data_consistency", lambda x, s: mri.data_consistency(x, y, mask, s),
         [T(_cplx(rng, (6, 6))), T(maps)]),
        ("edge_attention", lambda x, e: edge_attention(x, e, eam, False)[0],
         [T(rng.standard_normal((1, 2, 5, 5))), T(rng.standard_normal((1, 1, 5, 5)))]),
        ("msrb", lambda x: msrb_forward(x, msrb), [T(rng.standard_normal((1, 4, 5, 5)))]),
    ]
    return cases


def run_op_checks(seed: int = 0, h: float = 1e-5) -> list[GradCheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, tensors in op_cases(rng):
        probe_shape = fn(*tensors).shape
        weight = _cplx(rng, probe_shape) if any(t.is_complex for t in tensors) \
            else rng.standard_normal(probe_shape)
        found = directional_check(lambda: _probe(fn(*tensors), weight), tensors,
                                  [f"{name}[{i}]" for i in range(len(tensors))], h=h, seed=seed)
        results.extend(found)
    return results


def toy_model(seed: int = 0, variant: str = "full"):
    """8x8, 2 coils, N=2, M=2, C=8.

    Zero-initialised projections and the attention temperatures are redrawn so
    that no gradient path is trivially dead.
    """
    config = ReconConfig(N=2, M=2, C=8, heads=4, image_size=8, n_coils=2, seed=seed,
                         variant=variant)
    model = build_variant(variant, config)
    rng = np.random.default_rng(seed + 1)
    for _, p in model.params.items():
        if p.name.endswith("alpha"):
            p.data = 0.5 + rng.random(p.shape)
        elif not p.data.any():
            fan_in = int(np.prod(p.shape[1:])) if p.ndim > 1 else p.shape[0]
            p.data = rng.uniform(-1, 1, p.shape) / np.sqrt(fan_in)
    return model


def toy_batch(seed: int = 0, batch: int = 2):
    from .phantom import PhantomSpec, build_dataset

    return build_dataset(batch, PhantomSpec(size=8, n_ellipses=3, seed=seed), 2, 4,
                         seed=seed, center_fraction=0.2)


def run_model_check(seed: int = 0, h: float = 1e-5, variant: str = "full") -> list[GradCheckResult]:
    """One random direction per parameter tensor of the assembled model."""
    model = toy_model(seed, variant)
    samples = toy_batch(seed)
    y, masks, x_gt, e_gt = mri.collate(samples)

    def loss():
        x_pred, edges = model_forward(y, masks, model)
        return total_loss(x_pred, x_gt, edges, e_gt[:, None], 1.0)

    names = model.params.names()
    tensors = [model.params[n] for n in names]
    return directional_check(loss, tensors, names, h=h, seed=seed)


def run_sme_check(seed: int = 0, h: float = 1e-5) -> list[GradCheckResult]:
    """Sensitivity estimation on its own, through the refiner weights."""
    model = toy_model(seed)
    samples = toy_batch(seed)
    y, masks, _, _ = mri.collate(samples)
    w = _cplx(np.random.default_rng(seed), (len(samples), 2, 8, 8))
    names = [n for n in model.params.names() if n.startswith("sme.")]
    tensors = [model.params[n] for n in names]
    return directional_check(lambda: _probe(estimate_sensitivities(y, masks, model.sme), w),
                             tensors, names, h=h, seed=seed)


def run_suite(seed: int = 0) -> SuiteReport:
    report = SuiteReport()
    report.ops = run_op_checks(seed) + run_sme_check(seed)
    report.model = run_model_check(seed)
    return report

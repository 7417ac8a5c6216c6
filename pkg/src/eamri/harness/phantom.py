"""Synthetic multi-coil data: ellipse phantoms, smooth coil maps, simulated acquisitions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import mri
from ..edge import edge_operator


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 32
    n_ellipses: int = 6
    intensity_range: tuple[float, float] = (0.1, 0.45)
    seed: int = 0

    def __post_init__(self):
        if self.size < 2 or self.size & (self.size - 1):
            raise ValueError(f"phantom size must be a power of two, got {self.size}")
        if self.n_ellipses < 0:
            raise ValueError("n_ellipses must be >= 0")
        lo, hi = self.intensity_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad intensity range {self.intensity_range}")


def _grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    axis = (np.arange(n) - n / 2 + 0.5) / (n / 2)
    return np.meshgrid(axis, axis, indexing="ij")


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Complex image: a large support ellipse plus random inner ellipses, smooth phase.

    Magnitudes are clipped to [0, 1]; inner ellipses may brighten or darken.
    """
    rng = np.random.default_rng(spec.seed)
    yy, xx = _grid(spec.size)
    img = np.zeros((spec.size, spec.size))
    lo, hi = spec.intensity_range
    for k in range(spec.n_ellipses):
        if k == 0:
            cy, cx = rng.uniform(-0.08, 0.08, size=2)
            ay, ax = rng.uniform(0.6, 0.85, size=2)
            value = rng.uniform(0.55, 0.85)
        else:
            cy, cx = rng.uniform(-0.4, 0.4, size=2)
            ay, ax = rng.uniform(0.08, 0.35, size=2)
            value = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
        theta = rng.uniform(0.0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        img[(u / ax) ** 2 + (v / ay) ** 2 <= 1.0] += value
    mag = np.clip(img, 0.0, 1.0)
    p0 = rng.uniform(-np.pi, np.pi)
    py, px = rng.uniform(-np.pi / 4, np.pi / 4, size=2)
    return mag * np.exp(1j * (p0 + px * xx + py * yy))


def simulate_coil_maps(n_coils: int, height: int, width: int, seed: int = 0) -> np.ndarray:
    """Gaussian-lobe coil profiles placed around the field of view, normalised so
    that sum_i |S_i|^2 == 1 at every pixel."""
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    if n_coils == 1:
        return np.ones((1, height, width), dtype=np.complex128)
    rng = np.random.default_rng(seed)
    ya = (np.arange(height) - height / 2 + 0.5) / (height / 2)
    xa = (np.arange(width) - width / 2 + 0.5) / (width / 2)
    yy, xx = np.meshgrid(ya, xa, indexing="ij")
    offset = rng.uniform(0, 2 * np.pi)
    maps = []
    for i in range(n_coils):
        angle = offset + 2 * np.pi * i / n_coils
        cy, cx = 1.3 * np.sin(angle), 1.3 * np.cos(angle)
        sigma = rng.uniform(0.9, 1.2)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        phase = rng.uniform(-np.pi, np.pi) + rng.uniform(-0.5, 0.5) * xx + rng.uniform(-0.5, 0.5) * yy
        maps.append(mag * np.exp(1j * phase))
    S = np.stack(maps)
    return S / np.sqrt((np.abs(S) ** 2).sum(axis=0, keepdims=True))


def simulate_sample(spec: PhantomSpec, n_coils: int, af: float,
                    center_fraction: Optional[float] = None, seed: int = 0,
                    edge_op: str = "sobel", sigma: float = 0.0) -> mri.KSpaceSample:
    rng = np.random.default_rng(seed)
    phantom_seed, coil_seed, mask_seed, noise_seed = rng.integers(0, 2 ** 63, size=4)
    x = generate_phantom(PhantomSpec(spec.size, spec.n_ellipses, spec.intensity_range,
                                     int(phantom_seed)))
    S = simulate_coil_maps(n_coils, spec.size, spec.size, int(coil_seed))
    mask = mri.make_cartesian_mask(spec.size, af, center_fraction, int(mask_seed))
    y = mri.forward_model(x, S, mask, sigma, np.random.default_rng(int(noise_seed))).data
    edges = edge_operator(edge_op)(np.abs(x))
    return mri.KSpaceSample(y=y, mask=mask, x_gt=x, edge_gt=edges, coil_maps=S)


def build_dataset(n_samples: int, spec: PhantomSpec, n_coils: int, af: float, seed: int = 0,
                  center_fraction: Optional[float] = None, edge_op: str = "sobel",
                  sigma: float = 0.0) -> list[mri.KSpaceSample]:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    seeds = np.random.SeedSequence(seed).generate_state(n_samples, dtype=np.uint64)
    return [simulate_sample(spec, n_coils, af, center_fraction, int(s), edge_op, sigma)
            for s in seeds]

"""Netpbm image output: 16-bit PGM for images/edges, 8-bit PPM heatmaps."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

# viridis-like anchor colours, evenly spaced over [0, 1]
RAMP = np.array([
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
], dtype=np.float64)


def _unit(img: np.ndarray, vmax: Optional[float]) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    top = float(img.max()) if vmax is None else float(vmax)
    if top <= 0:
        return np.zeros_like(img)
    return np.clip(img / top, 0.0, 1.0)


def write_pgm16(path, img: np.ndarray, vmax: Optional[float] = None) -> None:
    u = np.rint(_unit(img, vmax) * 65535).astype(">u2")
    h, w = u.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + u.tobytes())


def colormap(u: np.ndarray) -> np.ndarray:
    pos = u * (len(RAMP) - 1)
    lo = np.clip(np.floor(pos).astype(int), 0, len(RAMP) - 2)
    frac = (pos - lo)[..., None]
    rgb = RAMP[lo] * (1 - frac) + RAMP[lo + 1] * frac
    return np.rint(rgb).astype(np.uint8)


def write_ppm_heatmap(path, img: np.ndarray, vmax: Optional[float] = None) -> None:
    rgb = colormap(_unit(img, vmax))
    h, w = rgb.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a binary P5/P6 file written by this module (no comments)."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported netpbm type {magic!r}")
    dtype = ">u2" if maxval > 255 else "u1"
    channels = 3 if magic == b"P6" else 1
    arr = np.frombuffer(raw, dtype=dtype, offset=pos, count=w * h * channels)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w))

"""Single-file tensor container used for datasets and checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"EAMRI\\x00TC"
    4 bytes   uint32 format version
    8 bytes   uint64 header length in bytes
    header    UTF-8 JSON {"kind", "meta", "tensors": [{"name", "dtype", "shape"}, ...]}
    payload   each tensor in header order as raw little-endian float64
              (complex128 tensors as interleaved re/im float64 pairs)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ReconConfig
from ..mri import KSpaceSample, SamplingMask

MAGIC = b"EAMRI\x00TC"
VERSION = 1
_DTYPES = {"float64": np.dtype("<f8"), "complex128": np.dtype("<c16")}


class FormatError(ValueError):
    """Raised for malformed container files; the message names the offending field."""


def write_container(path, kind: str, tensors: dict, meta: dict) -> None:
    entries, blobs = [], []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            dtype = "complex128"
        else:
            dtype = "float64"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(data.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path) -> tuple[str, dict, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic (not an EAMRI container)")
    if len(raw) < 20:
        raise FormatError(f"{path}: truncated preamble")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FormatError(f"{path}: header is not valid JSON ({err})") from None
    for key in ("kind", "meta", "tensors"):
        if key not in header:
            raise FormatError(f"{path}: header missing field {key!r}")
    offset = 20 + hlen
    tensors = {}
    for entry in header["tensors"]:
        name = entry.get("name", "?")
        dtype = _DTYPES.get(entry.get("dtype"))
        if dtype is None:
            raise FormatError(f"{path}: tensor {name!r} has unsupported dtype {entry.get('dtype')!r}")
        shape = tuple(entry.get("shape", ()))
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: payload for tensor {name!r} is truncated")
        tensors[name] = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize,
                                      offset=offset).reshape(shape).astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after last tensor")
    return header["kind"], header["meta"], tensors


# ---------------------------------------------------------------- datasets

_DATASET_FIELDS = ("y", "mask", "acs", "x_gt", "edge_gt", "coil_maps")


def save_dataset(path, samples: Sequence[KSpaceSample], meta: dict | None = None) -> None:
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    tensors = {
        "y": np.stack([s.y for s in samples]),
        "mask": np.stack([s.mask.columns.astype(np.float64) for s in samples]),
        "acs": np.array([s.mask.acs for s in samples], dtype=np.float64),
        "x_gt": np.stack([s.x_gt for s in samples]),
        "edge_gt": np.stack([s.edge_gt for s in samples]),
    }
    if all(s.coil_maps is not None for s in samples):
        tensors["coil_maps"] = np.stack([s.coil_maps for s in samples])
    write_container(path, "dataset", tensors, dict(meta or {}))


def load_dataset(path) -> tuple[list[KSpaceSample], dict]:
    kind, meta, t = read_container(path)
    if kind != "dataset":
        raise FormatError(f"{path}: kind is {kind!r}, expected 'dataset'")
    for name in _DATASET_FIELDS[:5]:
        if name not in t:
            raise FormatError(f"{path}: missing field {name!r}")
    y = t["y"]
    if y.ndim != 4 or y.dtype != np.complex128:
        raise FormatError(f"{path}: field 'y' must be complex (n, coils, H, W), got {y.shape}")
    n, nc, H, W = y.shape
    expected = {"mask": (n, W), "acs": (n, 2), "x_gt": (n, H, W), "edge_gt": (n, H, W),
                "coil_maps": (n, nc, H, W)}
    for name, shape in expected.items():
        if name in t and t[name].shape != shape:
            raise FormatError(f"{path}: field {name!r} has shape {t[name].shape}, expected {shape}")
    if not np.isin(t["mask"], (0.0, 1.0)).all():
        raise FormatError(f"{path}: field 'mask' is not binary")
    samples = []
    for i in range(n):
        start, stop = (int(v) for v in t["acs"][i])
        mask = SamplingMask(t["mask"][i].astype(bool), (start, stop))
        coil = t["coil_maps"][i] if "coil_maps" in t else None
        samples.append(KSpaceSample(y[i], mask, t["x_gt"][i], t["edge_gt"][i], coil))
    return samples, meta


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, model, state=None) -> None:
    tensors = {f"param/{n}": p.data for n, p in model.params.items()}
    meta = {"config": model.config.to_dict(), "variant": model.variant}
    if state is not None:
        for n in model.params.names():
            if n in state.m:
                tensors[f"adam_m/{n}"] = state.m[n]
                tensors[f"adam_v/{n}"] = state.v[n]
        meta["adam"] = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
                        "eps": state.eps, "weight_decay": state.weight_decay,
                        "step": state.step}
    write_container(path, "checkpoint", tensors, meta)


def load_checkpoint(path):
    """Rebuild ``(model, adam_state)`` from a checkpoint; state is None if absent."""
    from ..recon import build_variant
    from ..training import AdamState

    kind, meta, t = read_container(path)
    if kind != "checkpoint":
        raise FormatError(f"{path}: kind is {kind!r}, expected 'checkpoint'")
    if "config" not in meta or "variant" not in meta:
        raise FormatError(f"{path}: meta missing field 'config' or 'variant'")
    config = ReconConfig.from_dict(meta["config"])
    model = build_variant(meta["variant"], config)
    params = {k[len("param/"):]: v for k, v in t.items() if k.startswith("param/")}
    try:
        model.params.load_state_dict(params)
    except (KeyError, ValueError) as err:
        raise FormatError(f"{path}: parameter mismatch: {err}") from None
    state = None
    if "adam" in meta:
        state = AdamState(**meta["adam"])
        for k, v in t.items():
            if k.startswith("adam_m/"):
                state.m[k[len("adam_m/"):]] = v.copy()
            elif k.startswith("adam_v/"):
                state.v[k[len("adam_v/"):]] = v.copy()
    return model, state

"""Synthetic data, file formats and image output."""
from ..config import ConfigError, ReconConfig
from .images import read_pnm, write_pgm16, write_ppm_heatmap
from .io import (
    FormatError,
    load_checkpoint,
    load_dataset,
    read_container,
    save_checkpoint,
    save_dataset,
    write_container,
)
from .phantom import PhantomSpec, build_dataset, generate_phantom, simulate_coil_maps

__all__ = [
    "ConfigError", "FormatError", "PhantomSpec", "ReconConfig", "build_dataset",
    "generate_phantom", "load_checkpoint", "load_dataset", "read_container", "read_pnm",
    "save_checkpoint", "save_dataset", "simulate_coil_maps", "write_container", "write_pgm16",
    "write_ppm_heatmap",
]

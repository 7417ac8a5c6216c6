"""Architecture and training configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

VARIANTS = ("full", "m1", "m2", "m3")


class ConfigError(ValueError):
    pass


@dataclass
class ReconConfig:
    # network
    N: int = 4
    M: int = 3
    C: int = 32
    heads: int = 4
    msrb_count: int = 3
    head_channels: Optional[int] = None
    sme_channels: Optional[int] = None
    variant: str = "full"
    literal_alpha: bool = False
    # acquisition
    af: float = 4
    center_fraction: Optional[float] = None
    n_coils: int = 4
    image_size: int = 32
    noise_sigma: float = 0.0
    edge_op: str = "sobel"
    # optimisation
    beta: float = 1.0
    lr: float = 5e-4
    weight_decay: float = 1e-7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 4
    steps: int = 500
    eval_every: int = 100
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def head_width(self) -> int:
        return self.head_channels if self.head_channels is not None else max(self.C // 2, 1)

    @property
    def sme_width(self) -> int:
        return self.sme_channels if self.sme_channels is not None else max(self.C // 4, 1)

    def validate(self) -> None:
        for name in ("N", "M", "C", "heads", "msrb_count", "n_coils", "image_size", "batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.C % self.heads:
            raise ConfigError(f"C={self.C} is not divisible by heads={self.heads}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.edge_op not in ("sobel", "canny"):
            raise ConfigError(f"edge_op must be 'sobel' or 'canny', got {self.edge_op!r}")
        if self.steps < 0 or self.eval_every < 1:
            raise ConfigError("steps must be >= 0 and eval_every >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")

    def replace(self, **changes) -> "ReconConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ReconConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def load(cls, path) -> "ReconConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

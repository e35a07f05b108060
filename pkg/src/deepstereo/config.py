"""Architecture and training hyperparameter containers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class NetConfig:
    """All architecture hyperparameters.

    ``max_disparity`` is in full-resolution pixels; the network emits cost
    slices for even disparities only, so the cost volume has
    ``max_disparity / 2`` slices and matching runs at ``max_disparity / 4``
    quarter-resolution shifts.
    """

    max_disparity: int = 32
    embed_channels: int = 8
    signature_channels: int = 4
    hourglass_base_channels: int = 8
    hourglass_levels: int = 2
    matching_hidden_channels: int = 8
    norm_eps: float = 1e-5
    lrelu_slope: float = 0.1

    def __post_init__(self):
        if self.max_disparity % 4 != 0 or self.max_disparity < 4:
            raise ValueError(
                f"max_disparity must be a positive multiple of 4, "
                f"got {self.max_disparity}")
        for name in ("embed_channels", "signature_channels",
                     "hourglass_base_channels", "matching_hidden_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hourglass_levels < 1:
            raise ValueError("hourglass_levels must be >= 1")
        if self.matching_hidden_channels >= 2 * self.embed_channels:
            raise ValueError(
                "matching_hidden_channels must compress the concatenated "
                f"descriptors: need < {2 * self.embed_channels}")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "NetConfig":
        return cls(**json.loads(Path(path).read_text()))


def desk_config() -> NetConfig:
    """Small configuration that trains in minutes on one CPU core."""
    return NetConfig()


def paper_config() -> NetConfig:
    """Full-scale configuration (analysis only; too slow to train here)."""
    return NetConfig(
        max_disparity=192,
        embed_channels=32,
        signature_channels=8,
        hourglass_base_channels=32,
        hourglass_levels=3,
        matching_hidden_channels=16,
    )


@dataclass
class TrainConfig:
    """Optimization settings for one training run.

    The learning rate is ``learning_rate`` until iteration
    ``lr_halve_start`` and halves every ``lr_halve_period`` iterations from
    there on.  ``crop_height``/``crop_width`` of None trains on full-size
    images.
    """

    loss: str = "subpixel_ce"  # or "l1_softargmin"
    learning_rate: float = 0.01
    lr_halve_start: int = 600
    lr_halve_period: int = 200
    iterations: int = 800
    crop_height: Optional[int] = None
    crop_width: Optional[int] = None
    laplace_b: float = 2.0
    map_delta: float = 4.0
    seed: int = 0
    val_interval: int = 100
    checkpoint_dir: Optional[str] = None
    log_path: Optional[str] = None
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        if self.loss not in ("subpixel_ce", "l1_softargmin"):
            raise ValueError(f"unknown loss kind {self.loss!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        if (self.crop_height is None) != (self.crop_width is None):
            raise ValueError("crop_height and crop_width must be set together")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls(**json.loads(Path(path).read_text()))


def learning_rate_at(cfg: TrainConfig, iteration: int) -> float:
    """Scheduled learning rate: halves every period once past the start."""
    halvings = max(
        0, (iteration - cfg.lr_halve_start) // cfg.lr_halve_period + 1)
    return cfg.learning_rate * (0.5 ** halvings)

"""Trainer configuration."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

ENCODERS = ("point", "rangemap")


@dataclass
class TrainerConfig:
    encoder: str = "rangemap"
    feature_dim: int = 1024
    lstm_layers: int = 2
    lstm_hidden: int = 1024

    # range-map grid; full scale is 120 x 1024, desk-scale default is smaller
    grid_height: int = 32
    grid_width: int = 256
    phi_min: float = math.radians(-30.0)
    phi_max: float = math.radians(10.0)
    theta_min: float = 0.0
    theta_max: float = 2.0 * math.pi

    past_frames: int = 2
    horizon: int = 2

    # point-decoder output size (fixed: the decoder MLP ends in K*3 units)
    decoder_points: int = 16384
    # cap on ground-truth cloud size fed to the Chamfer term (strided subsample)
    gt_points_cap: int = 4096
    # ranges are divided by this on encoder input and multiplied back on
    # decoder output, so the network works in O(1) units
    range_scale: float = 25.0

    lambda_l1: float = 0.1
    lambda_bce: float = 0.1
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    epochs: int = 30
    max_steps: int | None = None
    checkpoint_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.lambda_l1 < 0 or self.lambda_bce < 0:
            raise ValueError("loss weights must be non-negative")
        if self.encoder == "point":
            # range-map losses do not exist on the point path
            self.lambda_l1 = 0.0
            self.lambda_bce = 0.0
        if self.past_frames < 1 or self.horizon < 1:
            raise ValueError("past_frames and horizon must be >= 1")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.grid_height, self.grid_width)

    @property
    def method_name(self) -> str:
        return f"learned_{self.encoder}"

    @classmethod
    def full_scale(cls, **overrides) -> "TrainerConfig":
        """Production-size grid and windows (needs serious compute)."""
        return cls(grid_height=120, grid_width=1024, past_frames=10,
                   horizon=10, **overrides)

    @classmethod
    def from_json(cls, path) -> "TrainerConfig":
        doc = json.loads(open(path, encoding="utf-8").read())
        if "betas" in doc:
            doc["betas"] = tuple(doc["betas"])
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["betas"] = list(self.betas)
        return doc

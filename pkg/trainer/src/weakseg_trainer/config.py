"""Training configuration with the reference hyperparameters as defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

BACKBONES = ("resnet50", "resnet101", "resnet152")

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]


class TrainerError(Exception):
    pass


class DataError(TrainerError):
    pass


class ExportError(TrainerError):
    pass


class ManifestError(TrainerError):
    pass


@dataclass
class TrainConfig:
    backbone: str = "resnet50"
    pretrained: bool = True
    epochs: int = 20
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 32
    input_size: int = 128
    seed: int = 0
    val_image_count: int = 0  # 0: max(1, 10% of source images)
    # train-time photometric noise
    jitter_brightness: float = 0.2
    jitter_contrast: float = 0.2
    gauss_noise_std: float = 0.02
    mult_noise_range: float = 0.1

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_json(json.load(f))

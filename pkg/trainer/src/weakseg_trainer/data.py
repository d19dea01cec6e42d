"""Tile dataset over the `tile` command's output layout.

Expects a directory with pos/ and neg/ subdirectories of grayscale PNG
patches plus an index.csv (columns tile, image, x, y, label). Train and
validation splits are separated at the source-image level so patches of one
image never straddle the split.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from .config import IMAGENET_MEAN, IMAGENET_STD, DataError, TrainConfig

_MEAN = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
_STD = torch.tensor(IMAGENET_STD).view(3, 1, 1)


def read_index(tiles_dir) -> list[dict]:
    index_path = Path(tiles_dir) / "index.csv"
    if not index_path.exists():
        raise DataError(f"missing index: {index_path}")
    with open(index_path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise DataError(f"empty index: {index_path}")
    for row in rows:
        row["label"] = int(row["label"])
    labels = {row["label"] for row in rows}
    if labels != {0, 1}:
        raise DataError(f"need both classes present, found labels {sorted(labels)}")
    return rows


def split_rows_by_image(rows, seed: int, val_image_count: int = 0):
    images = sorted({row["image"] for row in rows})
    if val_image_count <= 0:
        val_image_count = max(1, len(images) // 10)
    if val_image_count >= len(images):
        raise DataError(
            f"cannot hold out {val_image_count} of {len(images)} source images for validation"
        )
    order = np.random.default_rng(seed).permutation(len(images))
    val_images = {images[i] for i in order[:val_image_count]}
    train = [r for r in rows if r["image"] not in val_images]
    val = [r for r in rows if r["image"] in val_images]
    return train, val


def load_tile(tiles_dir, row) -> np.ndarray:
    sub = "pos" if row["label"] else "neg"
    path = Path(tiles_dir) / sub / row["tile"]
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


class TileDataset(Dataset):
    """Patch tiles with the reference augmentation recipe.

    Geometric augmentations (0/90 degree rotation, horizontal and vertical
    flips) apply to train and validation; photometric jitter and additive /
    multiplicative noise apply at train time only. `augment=None` disables
    everything (test-time behavior).
    """

    def __init__(self, tiles_dir, rows, cfg: TrainConfig, augment: str | None, seed: int = 0):
        if augment not in (None, "train", "val"):
            raise ValueError(f"augment must be None, 'train', or 'val', got {augment!r}")
        self.tiles_dir = Path(tiles_dir)
        self.rows = rows
        self.cfg = cfg
        self.augment = augment
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.rows)

    def reseed(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def _geometric(self, img: np.ndarray) -> np.ndarray:
        if self.rng.integers(0, 2):
            img = np.rot90(img)
        if self.rng.integers(0, 2):
            img = img[:, ::-1]
        if self.rng.integers(0, 2):
            img = img[::-1, :]
        return img

    def _photometric(self, img: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        img = img * float(1.0 + self.rng.uniform(-cfg.jitter_contrast, cfg.jitter_contrast))
        img = img + float(self.rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness))
        img = img * (1.0 + self.rng.normal(0.0, cfg.mult_noise_range, size=img.shape))
        img = img + self.rng.normal(0.0, cfg.gauss_noise_std, size=img.shape)
        return img

    def __getitem__(self, i):
        row = self.rows[i]
        img = load_tile(self.tiles_dir, row)
        if img.shape != (self.cfg.input_size, self.cfg.input_size):
            pil = Image.fromarray(img.astype(np.float32), mode="F")
            pil = pil.resize((self.cfg.input_size, self.cfg.input_size), Image.Resampling.LANCZOS)
            img = np.asarray(pil, dtype=np.float32)
        if self.augment is not None:
            img = self._geometric(img)
        if self.augment == "train":
            img = self._photometric(img)
        img = np.clip(img, 0.0, 1.0).astype(np.float32)
        return to_model_input(img), row["label"]


def to_model_input(img: np.ndarray) -> torch.Tensor:
    """[0,1] grayscale array -> normalized 3-channel tensor."""
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
    t = t.unsqueeze(0).repeat(3, 1, 1)
    return (t - _MEAN) / _STD

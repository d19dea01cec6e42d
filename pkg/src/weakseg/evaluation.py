"""Segmentation and classification metrics plus dataset split management.

The segmentation score is a macro F1: per-image recall and precision are
averaged across the dataset at each of 101 confidence thresholds, and the
best harmonic mean over thresholds is reported. Empty ratios (0/0) count
as zero so images without positives cannot inflate the average.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DatasetError, ShapeError, UsageError
from .raster import make_patch_grid

N_THRESHOLDS = 101

THRESHOLDS = tuple(i / 100 for i in range(N_THRESHOLDS))


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int


class MacroF1Result(NamedTuple):
    f1: float
    best_t: float
    thresholds: tuple
    precision: tuple
    recall: tuple

    def curve_json(self) -> dict:
        return {
            "f1": self.f1,
            "best_t": self.best_t,
            "per_threshold": [
                {"t": t, "p": p, "r": r}
                for t, p, r in zip(self.thresholds, self.precision, self.recall)
            ],
        }


def confusion_at(pred: np.ndarray, gt: np.ndarray, t: float) -> ConfusionCounts:
    """Pixel counts with positives defined as pred >= t."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    pos = pred >= t
    truth = gt > 0
    tp = int(np.count_nonzero(pos & truth))
    fp = int(np.count_nonzero(pos & ~truth))
    fn = int(np.count_nonzero(~pos & truth))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn)


def _counts_per_threshold(pred: np.ndarray, gt: np.ndarray):
    """tp/fp/fn for all 101 thresholds at once via sorted score partitions."""
    truth = np.asarray(gt).ravel() > 0
    scores = np.asarray(pred, dtype=np.float64).ravel()
    pos_scores = np.sort(scores[truth])
    neg_scores = np.sort(scores[~truth])
    ts = np.asarray(THRESHOLDS)
    n_pos, n_neg = pos_scores.size, neg_scores.size
    tp = n_pos - np.searchsorted(pos_scores, ts, side="left")
    fp = n_neg - np.searchsorted(neg_scores, ts, side="left")
    fn = n_pos - tp
    return tp, fp, fn


def macro_f1(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> MacroF1Result:
    """Maximum harmonic mean of threshold-wise mean recall and precision.

    Ties resolve to the smallest threshold; 0/0 ratios contribute zero.
    """
    if len(preds) == 0 or len(preds) != len(gts):
        raise UsageError(f"need equal non-empty lists, got {len(preds)} vs {len(gts)}")
    n = len(preds)
    recall_sum = np.zeros(N_THRESHOLDS, dtype=np.float64)
    precision_sum = np.zeros(N_THRESHOLDS, dtype=np.float64)
    for pred, gt in zip(preds, gts):
        if pred.shape != gt.shape:
            raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
        tp, fp, fn = _counts_per_threshold(pred, gt)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
            p = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall_sum += r
        precision_sum += p
    r_t = recall_sum / n
    p_t = precision_sum / n
    with np.errstate(divide="ignore", invalid="ignore"):
        f1_t = np.where(p_t + r_t > 0, 2.0 * p_t * r_t / (p_t + r_t), 0.0)
    best = int(np.argmax(f1_t))
    return MacroF1Result(
        f1=float(f1_t[best]),
        best_t=THRESHOLDS[best],
        thresholds=THRESHOLDS,
        precision=tuple(p_t),
        recall=tuple(r_t),
    )


def classification_f1(scores: Sequence[float], labels: Sequence[int]) -> float:
    """F1 of the crack class with predictions thresholded at 0.5."""
    if len(scores) == 0 or len(scores) != len(labels):
        raise UsageError(f"need equal non-empty lists, got {len(scores)} vs {len(labels)}")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) > 0
    pred = s >= 0.5
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def extract_patch_labels(gt: np.ndarray, patch_size: int = 128, stride: int = 64) -> np.ndarray:
    """Per-origin {0,1} labels: 1 iff the patch footprint (clipped to the
    image) contains any foreground pixel. Returned row-major (grid_h, grid_w)."""
    gt = np.asarray(gt)
    h, w = gt.shape
    grid = make_patch_grid(w, h, patch_size, stride)
    labels = np.zeros((grid.grid_h, grid.grid_w), dtype=np.uint8)
    for gy, oy in enumerate(grid.y_origins):
        for gx, ox in enumerate(grid.x_origins):
            window = gt[oy : min(oy + patch_size, h), ox : min(ox + patch_size, w)]
            labels[gy, gx] = 1 if np.any(window > 0) else 0
    return labels


@dataclass(frozen=True)
class DatasetSpec:
    """Expected layout of one of the three benchmark datasets."""

    name: str
    n_train: int
    n_test: int
    n_val: int
    omit: tuple = ()

    def expected_total(self) -> int:
        return self.n_train + self.n_test


DATASETS = {
    "CFD": DatasetSpec(name="CFD", n_train=71, n_test=46, n_val=7, omit=("042",)),
    "DCD": DatasetSpec(name="DCD", n_train=300, n_test=237, n_val=30),
    "AEL": DatasetSpec(name="AEL", n_train=34, n_test=24, n_val=4),
}


class Splits(NamedTuple):
    train: tuple
    val: tuple
    test: tuple


def make_splits(
    spec: DatasetSpec,
    names: Sequence[str],
    seed: int,
    train_names: Sequence[str] | None = None,
    test_names: Sequence[str] | None = None,
) -> Splits:
    """Partition image names into train/val/test.

    Train/test either follow the provided official lists or fall back to
    sorted order (first n_train for training). Validation names are carved
    from the training set by a seeded shuffle, so a fixed seed always yields
    identical splits.
    """
    usable = sorted(n for n in names if n not in spec.omit)
    if len(usable) != spec.expected_total():
        raise DatasetError(
            f"{spec.name}: expected {spec.expected_total()} usable images, found {len(usable)}"
        )
    if (train_names is None) != (test_names is None):
        raise UsageError("provide both train and test name lists or neither")
    if train_names is not None:
        train = [n for n in train_names if n not in spec.omit]
        test = [n for n in test_names if n not in spec.omit]
        if sorted(train + test) != usable:
            raise DatasetError(f"{spec.name}: split lists do not cover the directory contents")
    else:
        train = usable[: spec.n_train]
        test = usable[spec.n_train :]
    if len(train) != spec.n_train or len(test) != spec.n_test:
        raise DatasetError(
            f"{spec.name}: split sizes {len(train)}/{len(test)} do not match "
            f"expected {spec.n_train}/{spec.n_test}"
        )
    order = np.random.default_rng(seed).permutation(len(train))
    val = sorted(train[i] for i in order[: spec.n_val])
    remaining = [n for n in train if n not in set(val)]
    return Splits(train=tuple(remaining), val=tuple(val), test=tuple(test))


def list_split_file(path) -> list[str]:
    """Read a newline-separated name list."""
    if not os.path.exists(path):
        raise DatasetError(f"split file not found: {path}")
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]

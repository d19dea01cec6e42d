"""Training loop: SGD over tile batches, best-validation-AUROC checkpointing."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from sklearn.metrics import roc_auc_score
from torch.utils.data import DataLoader

from .config import TrainConfig
from .data import TileDataset, read_index, split_rows_by_image
from .models import build_model, crack_probabilities


def _epoch_pass(model, loader, optimizer=None):
    training = optimizer is not None
    model.train(training)
    total_loss, n = 0.0, 0
    probs, labels = [], []
    with torch.set_grad_enabled(training):
        for x, y in loader:
            logits = model(x)
            # two-class cross-entropy == binary cross-entropy of the softmax
            # crack probability
            loss = torch.nn.functional.cross_entropy(logits, y)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total_loss += float(loss.detach()) * len(y)
            n += len(y)
            probs.append(crack_probabilities(logits.detach()).numpy())
            labels.append(y.numpy())
    probs = np.concatenate(probs)
    labels = np.concatenate(labels)
    return total_loss / n, probs, labels


def _auroc(labels, probs) -> float:
    if len(set(labels.tolist())) < 2:
        return 0.5  # degenerate validation split
    return float(roc_auc_score(labels, probs))


def train(tiles_dir, cfg: TrainConfig, out_dir) -> Path:
    """Train on a tile directory; returns the checkpoint path.

    Keeps the weights of the epoch with the best validation AUROC and writes
    a JSON log of per-epoch loss/accuracy/AUROC next to the checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    rows = read_index(tiles_dir)
    train_rows, val_rows = split_rows_by_image(rows, cfg.seed, cfg.val_image_count)

    train_set = TileDataset(tiles_dir, train_rows, cfg, augment="train", seed=cfg.seed)
    val_set = TileDataset(tiles_dir, val_rows, cfg, augment="val", seed=cfg.seed + 1)
    train_loader = DataLoader(train_set, batch_size=cfg.batch_size, shuffle=True,
                              generator=torch.Generator().manual_seed(cfg.seed))
    val_loader = DataLoader(val_set, batch_size=cfg.batch_size, shuffle=False)

    model = build_model(cfg.backbone, cfg.pretrained)
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)

    log = []
    best_auroc, best_state = -1.0, None
    for epoch in range(cfg.epochs):
        # fresh augmentation draws each epoch, reproducible per (seed, epoch)
        train_set.reseed(cfg.seed * 10007 + epoch)
        val_set.reseed(cfg.seed * 10007 + 500000 + epoch)
        train_loss, train_probs, train_labels = _epoch_pass(model, train_loader, optimizer)
        _, val_probs, val_labels = _epoch_pass(model, val_loader)
        val_auroc = _auroc(val_labels, val_probs)
        train_acc = float(np.mean((train_probs >= 0.5) == (train_labels > 0)))
        log.append(
            {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc,
             "val_auroc": val_auroc}
        )
        if val_auroc > best_auroc:
            best_auroc = val_auroc
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    checkpoint_path = out_dir / "checkpoint.pt"
    torch.save(
        {"state_dict": model.state_dict(), "config": cfg.to_json(), "best_val_auroc": best_auroc},
        checkpoint_path,
    )
    (out_dir / "training_log.json").write_text(json.dumps(log, indent=2) + "\n")
    return checkpoint_path


def evaluate(model, tiles_dir, rows, cfg: TrainConfig):
    """Eval-mode accuracy/AUROC over tiles, no augmentation."""
    dataset = TileDataset(tiles_dir, rows, cfg, augment=None)
    loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=False)
    _, probs, labels = _epoch_pass(model.eval(), loader)
    acc = float(np.mean((probs >= 0.5) == (labels > 0)))
    return acc, _auroc(labels, probs), probs, labels


def load_checkpoint(path) -> tuple[torch.nn.Module, TrainConfig]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = TrainConfig.from_json(payload["config"])
    model = build_model(cfg.backbone, pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, cfg

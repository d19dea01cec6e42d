import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def save_gray_png(img01, path):
    u8 = np.clip(np.floor(np.asarray(img01, dtype=np.float64) * 255.0 + 0.5), 0, 255)
    Image.fromarray(u8.astype(np.uint8), mode="L").save(path, format="PNG")


def smooth_background(rng, size):
    """Coarse blotchy texture; keeps its look when patches are rescaled."""
    coarse = rng.random((size // 16, size // 16))
    pil = Image.fromarray(coarse.astype(np.float32), mode="F")
    up = np.asarray(pil.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float64)
    return 0.55 + 0.3 * up + rng.normal(0.0, 0.015, (size, size))


def make_crack_dataset(root: Path, n_images=8, size=128, seed=7):
    """Half the images carry a synthetic dark crack with a matching mask."""
    rng = np.random.default_rng(seed)
    img_dir, gt_dir = root / "images", root / "gt"
    img_dir.mkdir(parents=True)
    gt_dir.mkdir(parents=True)
    for i in range(n_images):
        img = smooth_background(rng, size)
        gt = np.zeros((size, size), dtype=np.uint8)
        if i % 2 == 0:
            row = int(rng.integers(20, size - 28))
            img[row, :] = 0.05
            img[row + 1, ::2] = 0.08
            gt[row : row + 2, :] = 1
        save_gray_png(np.clip(img, 0.0, 1.0).astype(np.float32), img_dir / f"im{i}.png")
        save_gray_png(gt, gt_dir / f"im{i}.png")
    return img_dir, gt_dir


def run_weakseg(*args):
    """Invoke the segmentation pipeline CLI (the cross-component interface)."""
    return subprocess.run(
        [sys.executable, "-m", "weakseg", *map(str, args)], capture_output=True, text=True
    )


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    img_dir, gt_dir = make_crack_dataset(root)
    tiles = root / "tiles"
    proc = run_weakseg(
        "tile", "--image-dir", img_dir, "--gt-dir", gt_dir,
        "--out", tiles, "--patch", "64", "--stride", "64",
    )
    assert proc.returncode == 0, proc.stderr
    return {"images": img_dir, "gt": gt_dir, "tiles": tiles}


@pytest.fixture(scope="session")
def tile_dir(dataset):
    return dataset["tiles"]


@pytest.fixture(scope="session")
def sample_image(tmp_path_factory):
    root = tmp_path_factory.mktemp("sample")
    rng = np.random.default_rng(99)
    img = smooth_background(rng, 96)
    img[40, :] = 0.05
    path = root / "sample.png"
    save_gray_png(np.clip(img, 0.0, 1.0).astype(np.float32), path)
    return path


@pytest.fixture(scope="session")
def trained(tile_dir, tmp_path_factory):
    """One real training run shared by the suite."""
    from weakseg_trainer.config import TrainConfig
    from weakseg_trainer.train import train

    cfg = TrainConfig(
        backbone="resnet50", pretrained=False, epochs=12, lr=0.005,
        input_size=64, batch_size=16, seed=0, val_image_count=2,
    )
    out = tmp_path_factory.mktemp("run")
    checkpoint = train(tile_dir, cfg, out)
    log = json.loads((out / "training_log.json").read_text())
    return {"checkpoint": checkpoint, "out": out, "cfg": cfg, "log": log}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in getattr(rep, "nodeid", ""):
                lines.append((rep.nodeid.split("::")[-1], label))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, label in sorted(lines):
            terminalreporter.write_line(f"{label}  {name}")

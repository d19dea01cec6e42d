#!/usr/bin/env python3
"""Regenerate the synthetic test fixtures and their golden outputs.

Everything is seeded, so reruns are byte-identical. Run from the repo root:

    python3 scripts/make_fixtures.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from weakseg.backend import PatchScoreGrid, save_psg
from weakseg.cli import main as cli_main
from weakseg.raster import make_patch_grid, save_gray_png, save_scoremap

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

SIZE = 96
SEED = 20240915


def crack_path(size):
    """Polyline of (x, y) crack pixels snaking across the image."""
    rng = np.random.default_rng(SEED)
    xs = np.arange(size)
    y = size // 2 + np.cumsum(rng.integers(-1, 2, size=size))
    y = np.clip(y, 4, size - 5)
    return xs, y


def make_image():
    rng = np.random.default_rng(SEED + 1)
    noise = rng.random((SIZE, SIZE))
    # smooth the texture a little so patches keep several grey levels
    texture = (noise + np.roll(noise, 1, 0) + np.roll(noise, 1, 1)) / 3.0
    img = 0.62 + 0.28 * texture
    xs, ys = crack_path(SIZE)
    for x, y in zip(xs, ys):
        img[y, x] = 0.05
        if x % 3:
            img[y + 1, x] = 0.08
    return np.clip(img, 0.0, 1.0).astype(np.float32), (xs, ys)


def make_scores(img, xs, ys):
    h, w = img.shape
    grid = make_patch_grid(w, h, 32, 16)
    scores = np.zeros((grid.grid_h, grid.grid_w), dtype=np.float32)
    for gy, oy in enumerate(grid.y_origins):
        for gx, ox in enumerate(grid.x_origins):
            hit = np.any((xs >= ox) & (xs < ox + 32) & (ys >= oy) & (ys < oy + 32))
            scores[gy, gx] = 0.97 if hit else 0.03
    return PatchScoreGrid(patch_size=32, stride=16, src_w=w, src_h=h, scores=scores)


def make_cam(img, xs, ys):
    h, w = img.shape
    yy = np.arange(h)[:, None]
    dist = np.abs(yy - ys[None, :]).astype(np.float64)
    cam = np.clip(1.0 - dist / 12.0, 0.0, 1.0)
    return cam.astype(np.float32)


def main():
    FIXTURES.mkdir(exist_ok=True)
    img, (xs, ys) = make_image()
    save_gray_png(img, FIXTURES / "crack.png")
    save_psg(make_scores(img, xs, ys), FIXTURES / "crack.psg")
    save_scoremap(make_cam(img, xs, ys), FIXTURES / "crack.cam.smap")

    golden = FIXTURES / "golden"
    golden.mkdir(exist_ok=True)
    rc = cli_main(
        [
            "segment",
            str(FIXTURES / "crack.png"),
            "--scores",
            str(FIXTURES / "crack.psg"),
            "--cam",
            str(FIXTURES / "crack.cam.smap"),
            "--out-dir",
            str(golden),
            "--debug",
        ]
    )
    if rc != 0:
        raise SystemExit(f"golden generation failed with exit code {rc}")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()

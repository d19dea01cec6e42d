"""End-to-end segmentation: coarse localisation from patch scores and the
class-activation map, patch-local threshold segmentation, and their fusion.

Stages, in order:
  1. patch scores -> block-mean map -> Lanczos upsample   (localisation a)
  2. average with the CAM, drop cells <= cut, erode        (localisation b)
  3. bilateral filter -> patch-local Otsu, unanimity vote  (segmentation)
  4. multiply (1-2) with (3), bilateral filter, closing    (fusion)

The Gold-Standard variant replaces (1-2) with a dilated ground-truth mask
(then the same erosion), bounding what the thresholding stages can achieve
with a perfect classifier.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .backend import PatchScoreGrid, score_patches
from .errors import ConfigError, ShapeError
from .filters import (
    EIGHT_BIT_SCALE,
    BilateralParams,
    StructuringElement,
    bilateral_filter,
    close,
    dilate,
    erode,
)
from .raster import RASTER_DTYPE, lanczos_resize, make_patch_grid
from .thresholding import patch_threshold_segment


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline hyperparameters; defaults reproduce the reference setup."""

    loc_patch: int = 32
    loc_stride: int = 16
    thr_stride: int = 8
    bilateral_sigma_s: float = 120.0
    bilateral_sigma_r: float = 120.0  # 8-bit intensity scale, divided by 255 internally
    bilateral_d: int = 2
    erosion_size: int = 3
    erosion_iters: int = 4
    closing_size: int = 3
    closing_iters: int = 1
    retention_cut: float = 0.5
    gold_dilation_size: int = 16
    gold_dilation_iters: int = 1
    otsu_mode: str = "three"
    enable_bilateral: bool = True
    enable_closing: bool = True

    def __post_init__(self):
        for name in ("loc_patch", "loc_stride", "thr_stride", "bilateral_d", "erosion_size",
                     "erosion_iters", "closing_size", "closing_iters", "gold_dilation_size",
                     "gold_dilation_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (1 <= self.loc_stride <= self.loc_patch and 1 <= self.thr_stride <= self.loc_patch):
            raise ConfigError("strides must lie in [1, loc_patch]")
        if not 0.0 <= self.retention_cut <= 1.0:
            raise ConfigError(f"retention_cut must be in [0, 1], got {self.retention_cut}")
        if self.otsu_mode not in ("two", "three"):
            raise ConfigError(f"otsu_mode must be 'two' or 'three', got {self.otsu_mode!r}")
        if self.bilateral_sigma_s <= 0 or self.bilateral_sigma_r <= 0:
            raise ConfigError("bilateral sigmas must be positive")

    @property
    def bilateral_params(self) -> BilateralParams:
        return BilateralParams(
            sigma_s=self.bilateral_sigma_s,
            sigma_r=self.bilateral_sigma_r / EIGHT_BIT_SCALE,
            d=self.bilateral_d,
        )

    @property
    def erosion_se(self) -> StructuringElement:
        return StructuringElement(self.erosion_size, self.erosion_size, self.erosion_iters)

    @property
    def closing_se(self) -> StructuringElement:
        return StructuringElement(self.closing_size, self.closing_size, self.closing_iters)

    @property
    def gold_dilation_se(self) -> StructuringElement:
        return StructuringElement(
            self.gold_dilation_size, self.gold_dilation_size, self.gold_dilation_iters
        )

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "PipelineConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_json(json.load(f))

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


def score_block_map(grid: PatchScoreGrid, out_w: int, out_h: int) -> np.ndarray:
    """Stride-resolution map: one cell per stride x stride block, each the
    mean score of all patches whose footprint overlaps the block."""
    expected = make_patch_grid(out_w, out_h, grid.patch_size, grid.stride)
    if (grid.src_w, grid.src_h) != (out_w, out_h):
        raise ConfigError(
            f"grid source {grid.src_w}x{grid.src_h} does not match output {out_w}x{out_h}"
        )
    if (expected.grid_h, expected.grid_w) != grid.scores.shape:
        raise ConfigError(
            f"grid shape {grid.scores.shape} inconsistent with image {out_w}x{out_h}"
        )
    s = grid.stride
    bw = -(-out_w // s)
    bh = -(-out_h // s)
    acc = np.zeros((bh, bw), dtype=np.float64)
    cnt = np.zeros((bh, bw), dtype=np.int64)
    xs, ys = expected.x_origins, expected.y_origins
    for gy, oy in enumerate(ys):
        by0, by1 = oy // s, min(-(-(oy + grid.patch_size) // s), bh)
        for gx, ox in enumerate(xs):
            bx0, bx1 = ox // s, min(-(-(ox + grid.patch_size) // s), bw)
            acc[by0:by1, bx0:bx1] += float(grid.scores[gy, gx])
            cnt[by0:by1, bx0:bx1] += 1
    return acc / cnt


def localisation_from_scores(grid: PatchScoreGrid, out_w: int, out_h: int) -> np.ndarray:
    """Average overlapping patch scores onto a stride-resolution block map,
    then Lanczos-upsample to the image size."""
    return lanczos_resize(score_block_map(grid, out_w, out_h), out_w, out_h)


def merge_localisation(patch_map: np.ndarray, cam: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Average the two coarse maps, keep only confident cells, then erode
    toward the crack centerline."""
    if patch_map.shape != cam.shape:
        raise ShapeError(f"patch map {patch_map.shape} vs CAM {cam.shape}")
    merged = ((patch_map.astype(np.float64) + cam.astype(np.float64)) / 2.0).astype(RASTER_DTYPE)
    merged[merged <= cfg.retention_cut] = 0.0
    return erode(merged, cfg.erosion_se)


def fuse(loc: np.ndarray, seg: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Multiply the localisation confidences into the binary segmentation,
    then denoise and fill holes."""
    if loc.shape != seg.shape:
        raise ShapeError(f"localisation {loc.shape} vs segmentation {seg.shape}")
    out = (loc.astype(np.float64) * seg.astype(np.float64)).astype(RASTER_DTYPE)
    if cfg.enable_bilateral:
        out = bilateral_filter(out, cfg.bilateral_params)
    if cfg.enable_closing:
        out = close(out, cfg.closing_se)
    return np.clip(out, 0.0, 1.0).astype(RASTER_DTYPE)


def segment_with_localisation(img: np.ndarray, loc: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Threshold-segment the image and fuse with a ready localisation map."""
    base = bilateral_filter(img, cfg.bilateral_params) if cfg.enable_bilateral else img
    seg = patch_threshold_segment(base, cfg.loc_patch, cfg.thr_stride, cfg.otsu_mode)
    return fuse(loc, seg, cfg)


def localise(img: np.ndarray, backend, cam: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Classifier-driven coarse localisation map for an image."""
    h, w = img.shape
    grid = score_patches(backend, img, cfg.loc_patch, cfg.loc_stride)
    patch_map = localisation_from_scores(grid, w, h)
    return merge_localisation(patch_map, cam, cfg)


def segment(img: np.ndarray, backend, cam: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Full weakly-supervised pipeline for one image."""
    if cam.shape != img.shape:
        raise ShapeError(f"CAM {cam.shape} vs image {img.shape}")
    loc = localise(img, backend, cam, cfg)
    return segment_with_localisation(img, loc, cfg)


def gold_standard_localisation(gt: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Localisation map of a perfect classifier: widen the ground truth by
    dilation, then apply the standard erosion."""
    g = (np.asarray(gt) > 0).astype(RASTER_DTYPE)
    g = dilate(g, cfg.gold_dilation_se)
    return erode(g, cfg.erosion_se)


def gold_standard_segment(img: np.ndarray, gt: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Upper-bound variant: thresholding pipeline under perfect localisation."""
    if gt.shape != img.shape:
        raise ShapeError(f"ground truth {gt.shape} vs image {img.shape}")
    loc = gold_standard_localisation(gt, cfg)
    return segment_with_localisation(img, loc, cfg)

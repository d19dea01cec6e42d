"""Edge-preserving bilateral filtering and flat rectangular morphology.

Both operate on [0, 1] rasters with reflect-101 border handling. Bilateral
weights are the product of a spatial Gaussian and an intensity-range
Gaussian, normalized by their sum so the output is a weighted average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ShapeError
from .raster import RASTER_DTYPE

EIGHT_BIT_SCALE = 255.0


@dataclass(frozen=True)
class BilateralParams:
    """sigma_s: spatial std-dev in pixels; sigma_r: range std-dev on the
    [0, 1] intensity scale; d: neighborhood radius in pixels."""

    sigma_s: float
    sigma_r: float
    d: int

    def __post_init__(self):
        if self.sigma_s <= 0 or self.sigma_r <= 0:
            raise ValueError(f"sigmas must be positive, got {self.sigma_s}, {self.sigma_r}")
        if self.d < 1:
            raise ValueError(f"neighborhood radius must be >= 1, got {self.d}")


@dataclass(frozen=True)
class StructuringElement:
    """All-ones rectangle with an iteration count; anchor at (w//2, h//2)."""

    width: int
    height: int
    iterations: int = 1

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"element size {self.width}x{self.height} must be positive")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def bilateral_filter(img: np.ndarray, params: BilateralParams) -> np.ndarray:
    """Weighted average over the (2d+1)^2 neighborhood with Gaussian spatial
    and range kernels; borders mirror-padded with margin d.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"expected 2D raster, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("bilateral filter input contains non-finite values")
    d = params.d
    src = img.astype(np.float64)
    padded = np.pad(src, d, mode="reflect")
    h, w = src.shape
    inv_2ss = 1.0 / (2.0 * params.sigma_s * params.sigma_s)
    inv_2sr = 1.0 / (2.0 * params.sigma_r * params.sigma_r)
    num = np.zeros_like(src)
    den = np.zeros_like(src)
    for dy in range(-d, d + 1):
        for dx in range(-d, d + 1):
            ws = math.exp(-(dx * dx + dy * dy) * inv_2ss)
            shifted = padded[d + dy : d + dy + h, d + dx : d + dx + w]
            diff = src - shifted
            wgt = ws * np.exp(-(diff * diff) * inv_2sr)
            num += wgt * shifted
            den += wgt
    return (num / den).astype(RASTER_DTYPE)


def _window_reduce(img: np.ndarray, se: StructuringElement, fn, flip_anchor=False) -> np.ndarray:
    ax, ay = se.width // 2, se.height // 2
    if flip_anchor:
        ax, ay = se.width - 1 - ax, se.height - 1 - ay
    out = np.asarray(img)
    for _ in range(se.iterations):
        padded = np.pad(out, ((ay, se.height - 1 - ay), (ax, se.width - 1 - ax)), mode="reflect")
        windows = sliding_window_view(padded, (se.height, se.width))
        out = fn(windows, axis=(2, 3))
    return out


def erode(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Grayscale erosion: windowed minimum, mirror-padded, iterated."""
    return _window_reduce(img, se, np.min)


def dilate(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Grayscale dilation: windowed maximum, mirror-padded, iterated."""
    return _window_reduce(img, se, np.max)


def close(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Morphological closing: dilate then erode per iteration.

    The erosion uses the reflected element (anchor mirrored), which is what
    makes closing idempotent; for odd sizes the two coincide.
    """
    once = StructuringElement(se.width, se.height, 1)
    out = np.asarray(img)
    for _ in range(se.iterations):
        out = _window_reduce(dilate(out, once), once, np.min, flip_anchor=True)
    return out

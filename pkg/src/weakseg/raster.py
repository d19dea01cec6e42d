"""Image primitives: grayscale conversion, mirror padding, patch grids,
Lanczos resampling, and the ".smap" score-map file format.

Rasters are 2D numpy arrays, shape (height, width), float32 in [0, 1].
Binary masks are 2D uint8 arrays with values in {0, 1}.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError, FormatError, PaddingError, ShapeError

RASTER_DTYPE = np.float32

SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
_SMAP_HEADER = struct.Struct("<4sBII")

# BT.601 luma weights
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

LANCZOS_A = 3


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Convert an (h, w, 3) array with channels in [0, 1] to a luma raster."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"expected (h, w, 3) array, got shape {rgb.shape}")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    gray = _LUMA_R * r + _LUMA_G * g + _LUMA_B * b
    return np.clip(gray, 0.0, 1.0).astype(RASTER_DTYPE)


def mirror_pad(img: np.ndarray, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    """Reflect-101 padding: values mirror across the border without repeating
    the edge pixel. Each margin must be smaller than the matching dimension.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"expected 2D raster, got shape {img.shape}")
    h, w = img.shape
    if min(left, right, top, bottom) < 0:
        raise PaddingError("margins must be non-negative")
    if left >= w or right >= w or top >= h or bottom >= h:
        raise PaddingError(
            f"margins ({left},{right},{top},{bottom}) must be smaller than image size {w}x{h}"
        )
    return np.pad(img, ((top, bottom), (left, right)), mode="reflect")


@dataclass(frozen=True)
class PatchGrid:
    """Row-major enumeration of overlapping square patch origins.

    Origins sit at multiples of `stride`, up to and including the smallest
    multiple >= (dim - patch_size), so the last patch may extend past the
    right/bottom border (resolved by mirror padding when read).
    """

    width: int
    height: int
    patch_size: int
    stride: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ShapeError(f"image size {self.width}x{self.height} must be positive")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if not 1 <= self.stride <= self.patch_size:
            raise ValueError(
                f"stride must be in [1, patch_size], got stride={self.stride} patch={self.patch_size}"
            )

    @staticmethod
    def _axis_origins(dim: int, patch: int, stride: int) -> list[int]:
        if dim <= patch:
            return [0]
        last = math.ceil((dim - patch) / stride) * stride
        return list(range(0, last + 1, stride))

    @property
    def x_origins(self) -> list[int]:
        return self._axis_origins(self.width, self.patch_size, self.stride)

    @property
    def y_origins(self) -> list[int]:
        return self._axis_origins(self.height, self.patch_size, self.stride)

    @property
    def grid_w(self) -> int:
        return len(self.x_origins)

    @property
    def grid_h(self) -> int:
        return len(self.y_origins)

    def origins(self) -> list[tuple[int, int]]:
        """All (x, y) origins, row-major (y outer, x inner)."""
        xs = self.x_origins
        return [(x, y) for y in self.y_origins for x in xs]

    def padded_extent(self) -> tuple[int, int]:
        """(pad_right, pad_bottom) needed so every patch footprint is readable."""
        pad_r = self.x_origins[-1] + self.patch_size - self.width
        pad_b = self.y_origins[-1] + self.patch_size - self.height
        return max(pad_r, 0), max(pad_b, 0)


def make_patch_grid(width: int, height: int, patch_size: int, stride: int) -> PatchGrid:
    return PatchGrid(width=width, height=height, patch_size=patch_size, stride=stride)


def _lanczos_weights(n_in: int, n_out: int, a: int = LANCZOS_A):
    """Per-output-sample tap indices and normalized weights for one axis.

    Source coordinates are clamped at the borders; the kernel footprint is
    widened by the scale factor when minifying.
    """
    scale = n_out / n_in
    kscale = min(scale, 1.0)
    radius = a / kscale
    # standard half-pixel-centered mapping from output to input coordinates
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    first = np.floor(centers - radius).astype(np.int64) + 1
    n_taps = int(math.ceil(2 * radius))
    offsets = np.arange(n_taps, dtype=np.int64)
    idx = first[:, None] + offsets[None, :]
    x = (idx - centers[:, None]) * kscale
    w = np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)
    return idx, w


def _resample_axis(img: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = img.shape[axis]
    idx, w = _lanczos_weights(n_in, n_out)
    moved = np.moveaxis(img, axis, 0)
    out = np.zeros((n_out,) + moved.shape[1:], dtype=np.float64)
    # fixed tap order keeps the accumulation bit-deterministic
    for k in range(idx.shape[1]):
        out += w[:, k].reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx[:, k]]
    return np.moveaxis(out, 0, axis)


def lanczos_resize(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Lanczos-3 separable resampling, output clamped to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected 2D raster, got shape {img.shape}")
    if out_w < 1 or out_h < 1:
        raise ShapeError(f"output size {out_w}x{out_h} must be positive")
    out = _resample_axis(img, out_w, axis=1)
    out = _resample_axis(out, out_h, axis=0)
    return np.clip(out, 0.0, 1.0).astype(RASTER_DTYPE)


def save_scoremap(m: np.ndarray, path) -> None:
    """Write a score map as ".smap": SMAP magic, version byte, u32-LE width
    and height, then row-major f32-LE values.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"expected 2D score map, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("score map contains non-finite values")
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise DataError("score map values must lie in [0, 1]")
    h, w = m.shape
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    blob = _SMAP_HEADER.pack(SMAP_MAGIC, SMAP_VERSION, w, h) + payload
    _atomic_write_bytes(path, blob)


def load_scoremap(path) -> np.ndarray:
    """Read a ".smap" file back into a float32 (h, w) array."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _SMAP_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, w, h = _SMAP_HEADER.unpack_from(blob)
    if magic != SMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SMAP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _SMAP_HEADER.size + 4 * w * h
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_SMAP_HEADER.size)
    m = data.reshape(h, w).astype(RASTER_DTYPE)
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: non-finite values in payload")
    return m


def load_image(path) -> np.ndarray:
    """Load a PNG (or other Pillow-readable) image as a grayscale raster."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            return arr.astype(RASTER_DTYPE)
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        return to_grayscale(arr)


def load_mask(path) -> np.ndarray:
    """Load a PNG mask; any nonzero pixel counts as foreground."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 0).astype(np.uint8)


def save_gray_png(img: np.ndarray, path) -> None:
    """Save a [0, 1] raster (or {0,1} mask) as an 8-bit grayscale PNG."""
    img = np.asarray(img, dtype=np.float64)
    u8 = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    _atomic_write_image(Image.fromarray(u8, mode="L"), path)


def save_overlay_png(gray: np.ndarray, conf: np.ndarray, path, threshold: float = 0.5) -> None:
    """Save the input image with confidence >= threshold painted red."""
    if gray.shape != conf.shape:
        raise ShapeError(f"image {gray.shape} vs confidence {conf.shape}")
    u8 = np.clip(np.floor(np.asarray(gray, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    rgb = np.stack([u8, u8, u8], axis=-1)
    hot = conf >= threshold
    rgb[hot, 0] = 255
    rgb[hot, 1] = 0
    rgb[hot, 2] = 0
    _atomic_write_image(Image.fromarray(rgb, mode="RGB"), path)


def _atomic_write_bytes(path, blob: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def _atomic_write_image(im: Image.Image, path) -> None:
    tmp = f"{path}.tmp.{os.getpid()}.png"
    im.save(tmp, format="PNG")
    os.replace(tmp, path)

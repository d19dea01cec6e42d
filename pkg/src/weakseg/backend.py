"""Sources of per-patch crack probabilities.

The primary test path reads precomputed ".psg" score grids from disk, so the
segmentation pipeline runs without any ML runtime. An optional TorchScript
backend runs a trained classifier on each mirror-padded patch, driven by a
JSON manifest describing the model's input contract and output head.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ConfigError, DataError, FormatError
from .raster import RASTER_DTYPE, lanczos_resize, load_scoremap, make_patch_grid, _atomic_write_bytes

PSG_MAGIC = b"PSG1"
_PSG_HEADER = struct.Struct("<4sIIIIII")

MANIFEST_FIELDS = ("input_size", "channel_order", "mean", "std", "output_head", "crack_index")
OUTPUT_HEADS = ("softmax2", "sigmoid1")
CHANNEL_ORDERS = ("rgb", "gray")


@dataclass(frozen=True)
class PatchScoreGrid:
    """One crack probability per patch-grid origin, row-major."""

    patch_size: int
    stride: int
    src_w: int
    src_h: int
    scores: np.ndarray  # (grid_h, grid_w) float32 in [0, 1]

    def __post_init__(self):
        s = np.asarray(self.scores)
        if s.ndim != 2:
            raise DataError(f"scores must be 2D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("scores contain non-finite values")
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise DataError("scores must lie in [0, 1]")
        expected = make_patch_grid(self.src_w, self.src_h, self.patch_size, self.stride)
        if (expected.grid_h, expected.grid_w) != s.shape:
            raise ConfigError(
                f"grid shape {s.shape} inconsistent with source {self.src_w}x{self.src_h}, "
                f"patch {self.patch_size}, stride {self.stride} "
                f"(expected {expected.grid_h}x{expected.grid_w})"
            )

    @property
    def grid_w(self) -> int:
        return self.scores.shape[1]

    @property
    def grid_h(self) -> int:
        return self.scores.shape[0]


def save_psg(grid: PatchScoreGrid, path) -> None:
    header = _PSG_HEADER.pack(
        PSG_MAGIC, grid.grid_w, grid.grid_h, grid.patch_size, grid.stride, grid.src_w, grid.src_h
    )
    payload = np.ascontiguousarray(grid.scores, dtype="<f4").tobytes()
    _atomic_write_bytes(path, header + payload)


def load_psg(path) -> PatchScoreGrid:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _PSG_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, grid_w, grid_h, patch_size, stride, src_w, src_h = _PSG_HEADER.unpack_from(blob)
    if magic != PSG_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _PSG_HEADER.size + 4 * grid_w * grid_h
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    scores = np.frombuffer(blob, dtype="<f4", offset=_PSG_HEADER.size)
    scores = scores.reshape(grid_h, grid_w).astype(RASTER_DTYPE)
    if not np.all(np.isfinite(scores)):
        raise DataError(f"{path}: non-finite scores")
    return PatchScoreGrid(
        patch_size=patch_size, stride=stride, src_w=src_w, src_h=src_h, scores=scores
    )


class FileScoreBackend:
    """Stored score grid; deterministic and model-free."""

    def __init__(self, grid: PatchScoreGrid):
        self.grid = grid

    @classmethod
    def from_file(cls, path) -> "FileScoreBackend":
        return cls(load_psg(path))

    def score_patches(self, img: np.ndarray, patch_size: int, stride: int) -> PatchScoreGrid:
        h, w = img.shape
        g = self.grid
        if (g.src_w, g.src_h) != (w, h) or (g.patch_size, g.stride) != (patch_size, stride):
            raise ConfigError(
                f"stored grid (src {g.src_w}x{g.src_h}, patch {g.patch_size}, stride {g.stride}) "
                f"does not match request (src {w}x{h}, patch {patch_size}, stride {stride})"
            )
        return g


def load_model_manifest(path) -> dict:
    with open(path) as f:
        manifest = json.load(f)
    missing = [k for k in MANIFEST_FIELDS if k not in manifest]
    if missing:
        raise ConfigError(f"{path}: manifest missing fields {missing}")
    if manifest["output_head"] not in OUTPUT_HEADS:
        raise ConfigError(f"{path}: unknown output_head {manifest['output_head']!r}")
    if manifest["channel_order"] not in CHANNEL_ORDERS:
        raise ConfigError(f"{path}: unknown channel_order {manifest['channel_order']!r}")
    return manifest


class TorchScriptBackend:
    """Runs a TorchScript classifier over mirror-padded patches.

    Patches are resized to the manifest's input size, replicated to the
    declared channel layout, normalized with the recorded mean/std, and the
    output head maps logits to a crack probability.
    """

    def __init__(self, model_path, manifest: dict, batch_size: int = 64):
        try:
            import torch
        except ImportError as e:
            raise BackendError("model inference requires torch; install weakseg[model]") from e
        self._torch = torch
        try:
            self.model = torch.jit.load(str(model_path), map_location="cpu")
        except Exception as e:
            raise BackendError(f"failed to load model {model_path}: {e}") from e
        self.model.eval()
        self.manifest = manifest
        self.batch_size = batch_size

    @classmethod
    def from_files(cls, model_path, manifest_path) -> "TorchScriptBackend":
        return cls(model_path, load_model_manifest(manifest_path))

    def _prepare(self, patch: np.ndarray) -> np.ndarray:
        size = int(self.manifest["input_size"])
        if patch.shape != (size, size):
            patch = lanczos_resize(patch, size, size)
        n_ch = 3 if self.manifest["channel_order"] == "rgb" else 1
        chans = np.repeat(patch[None, :, :], n_ch, axis=0).astype(np.float32)
        mean = np.asarray(self.manifest["mean"], dtype=np.float32).reshape(-1, 1, 1)
        std = np.asarray(self.manifest["std"], dtype=np.float32).reshape(-1, 1, 1)
        return (chans - mean) / std

    def _probabilities(self, logits: np.ndarray) -> np.ndarray:
        head = self.manifest["output_head"]
        crack = int(self.manifest["crack_index"])
        if head == "softmax2":
            if logits.ndim != 2 or logits.shape[1] < 2:
                raise BackendError(f"softmax2 head expects (n, >=2) logits, got {logits.shape}")
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            return e[:, crack] / e.sum(axis=1)
        if logits.ndim == 2:
            logits = logits[:, crack]
        return 1.0 / (1.0 + np.exp(-logits))

    def score_patches(self, img: np.ndarray, patch_size: int, stride: int) -> PatchScoreGrid:
        torch = self._torch
        h, w = img.shape
        grid = make_patch_grid(w, h, patch_size, stride)
        pad_r, pad_b = grid.padded_extent()
        padded = np.pad(np.asarray(img, dtype=np.float64), ((0, pad_b), (0, pad_r)), mode="reflect")
        batches = []
        for ox, oy in grid.origins():
            batches.append(self._prepare(padded[oy : oy + patch_size, ox : ox + patch_size]))
        probs = np.empty(len(batches), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, len(batches), self.batch_size):
                chunk = np.stack(batches[start : start + self.batch_size])
                try:
                    out = self.model(torch.from_numpy(chunk)).numpy()
                except Exception as e:
                    raise BackendError(f"model forward pass failed: {e}") from e
                probs[start : start + len(chunk)] = self._probabilities(out)
        scores = np.clip(probs, 0.0, 1.0).astype(RASTER_DTYPE).reshape(grid.grid_h, grid.grid_w)
        return PatchScoreGrid(
            patch_size=patch_size, stride=stride, src_w=w, src_h=h, scores=scores
        )


def score_patches(backend, img: np.ndarray, patch_size: int = 32, stride: int = 16) -> PatchScoreGrid:
    """One crack probability per grid origin from whichever backend."""
    return backend.score_patches(img, patch_size, stride)


def load_cam(path, out_w: int | None = None, out_h: int | None = None) -> np.ndarray:
    """Load a class-activation map (".smap"), clamp to [0, 1], and resize to
    the target dimensions when they differ."""
    m = np.clip(load_scoremap(path), 0.0, 1.0)
    if out_w is not None and out_h is not None and m.shape != (out_h, out_w):
        m = lanczos_resize(m, out_w, out_h)
    return m

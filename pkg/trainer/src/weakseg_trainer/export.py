"""Exports consumed by the segmentation pipeline: TorchScript model with a
JSON manifest, ".psg" patch-score grids, and ".smap" activation maps.

The binary writers implement the pipeline's published file schemas; the
patch grid enumeration follows the shared rule (origins at stride multiples
up to the smallest multiple >= dim - patch, row-major, mirror-padded
overhang).
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import IMAGENET_MEAN, IMAGENET_STD, ExportError, ManifestError, TrainConfig
from .data import to_model_input
from .gradcampp import gradcam_pp
from .models import CRACK_INDEX, crack_probabilities

MANIFEST_FIELDS = ("input_size", "channel_order", "mean", "std", "output_head", "crack_index")

_SMAP_HEADER = struct.Struct("<4sBII")
_PSG_HEADER = struct.Struct("<4sIIIIII")


def write_smap(m: np.ndarray, path) -> None:
    m = np.asarray(m, dtype="<f4")
    h, w = m.shape
    with open(path, "wb") as f:
        f.write(_SMAP_HEADER.pack(b"SMAP", 1, w, h))
        f.write(np.ascontiguousarray(m).tobytes())


def write_psg(scores: np.ndarray, patch: int, stride: int, src_w: int, src_h: int, path) -> None:
    scores = np.asarray(scores, dtype="<f4")
    grid_h, grid_w = scores.shape
    with open(path, "wb") as f:
        f.write(_PSG_HEADER.pack(b"PSG1", grid_w, grid_h, patch, stride, src_w, src_h))
        f.write(np.ascontiguousarray(scores).tobytes())


def axis_origins(dim: int, patch: int, stride: int) -> list[int]:
    if dim <= patch:
        return [0]
    last = math.ceil((dim - patch) / stride) * stride
    return list(range(0, last + 1, stride))


def load_gray_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def lanczos_upsample(m: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    pil = Image.fromarray(np.asarray(m, dtype=np.float32), mode="F")
    pil = pil.resize((out_w, out_h), Image.Resampling.LANCZOS)
    return np.asarray(pil, dtype=np.float32)


def build_manifest(cfg: TrainConfig) -> dict:
    return {
        "format": "torchscript",
        "backbone": cfg.backbone,
        "input_size": cfg.input_size,
        "channel_order": "rgb",
        "mean": IMAGENET_MEAN,
        "std": IMAGENET_STD,
        "output_head": "softmax2",
        "crack_index": CRACK_INDEX,
    }


def validate_manifest(manifest: dict) -> dict:
    missing = [k for k in MANIFEST_FIELDS if k not in manifest]
    if missing:
        raise ManifestError(f"manifest missing fields {missing}")
    return manifest


def export_model(model: torch.nn.Module, cfg: TrainConfig, out_dir,
                 parity_patches: int = 100, tolerance: float = 1e-4) -> tuple[Path, Path]:
    """Script the model, verify forward parity on random patches, and write
    model.pt plus model.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    scripted = torch.jit.script(model)
    model_path = out_dir / "model.pt"
    scripted.save(str(model_path))

    reloaded = torch.jit.load(str(model_path), map_location="cpu")
    reloaded.eval()
    rng = np.random.default_rng(0)
    with torch.no_grad():
        for start in range(0, parity_patches, 25):
            n = min(25, parity_patches - start)
            batch = torch.stack(
                [to_model_input(rng.random((cfg.input_size, cfg.input_size)).astype(np.float32))
                 for _ in range(n)]
            )
            expected = model(batch)
            got = reloaded(batch)
            worst = float((expected - got).abs().max())
            if worst >= tolerance:
                raise ExportError(
                    f"exported model diverges from the framework output by {worst:g}"
                )
    manifest_path = out_dir / "model.json"
    manifest_path.write_text(json.dumps(validate_manifest(build_manifest(cfg)), indent=2) + "\n")
    return model_path, manifest_path


def _prepare_patch(patch: np.ndarray, input_size: int) -> torch.Tensor:
    if patch.shape != (input_size, input_size):
        patch = lanczos_upsample(patch, input_size, input_size)
    return to_model_input(np.clip(patch, 0.0, 1.0).astype(np.float32))


def export_scores(model: torch.nn.Module, cfg: TrainConfig, image: np.ndarray, path,
                  patch: int = 32, stride: int = 16, batch_size: int = 64) -> None:
    """One crack probability per localisation-grid origin, written as .psg."""
    model.eval()
    h, w = image.shape
    xs = axis_origins(w, patch, stride)
    ys = axis_origins(h, patch, stride)
    pad_r = max(xs[-1] + patch - w, 0)
    pad_b = max(ys[-1] + patch - h, 0)
    padded = np.pad(image, ((0, pad_b), (0, pad_r)), mode="reflect")
    inputs = [
        _prepare_patch(padded[oy : oy + patch, ox : ox + patch], cfg.input_size)
        for oy in ys
        for ox in xs
    ]
    probs = np.empty(len(inputs), dtype=np.float32)
    with torch.no_grad():
        for start in range(0, len(inputs), batch_size):
            chunk = torch.stack(inputs[start : start + batch_size])
            probs[start : start + len(chunk)] = crack_probabilities(model(chunk)).numpy()
    scores = np.clip(probs, 0.0, 1.0).reshape(len(ys), len(xs))
    write_psg(scores, patch, stride, w, h, path)


def export_cam(model: torch.nn.Module, cfg: TrainConfig, image: np.ndarray, path) -> None:
    """GradCAM++ for the crack class over the full image, Lanczos-upsampled
    to image resolution and max-normalized; written as .smap."""
    h, w = image.shape
    x = to_model_input(np.clip(image, 0.0, 1.0).astype(np.float32)).unsqueeze(0)
    cam = gradcam_pp(model, x)
    if cam.shape != (h, w):
        cam = lanczos_upsample(cam, w, h)
    cam = np.clip(cam, 0.0, 1.0)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    write_smap(cam.astype(np.float32), path)

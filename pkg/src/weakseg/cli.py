"""Command-line surface: segment, goldstd, eval, eval-cls, tile, threshold,
localize.

Every command that writes outputs also writes a run manifest recording the
config snapshot and content hashes of its inputs, so identical invocations
are byte-reproducible. Directory commands parallelize over images; the
WEAKSEG_THREADS environment variable caps the worker count.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .backend import FileScoreBackend, TorchScriptBackend, load_cam
from .errors import (
    ConfigError,
    DataError,
    DatasetError,
    FormatError,
    PaddingError,
    ShapeError,
    UsageError,
    WeaksegError,
)
from .evaluation import classification_f1, extract_patch_labels, macro_f1
from .filters import bilateral_filter
from .pipeline import (
    PipelineConfig,
    gold_standard_localisation,
    localise,
    segment,
    segment_with_localisation,
)
from .raster import (
    load_image,
    load_mask,
    load_scoremap,
    make_patch_grid,
    save_gray_png,
    save_overlay_png,
    save_scoremap,
)
from .thresholding import niblack, patch_threshold_segment, sauvola, threshold_mask

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def worker_count() -> int:
    env = os.environ.get("WEAKSEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise UsageError(f"WEAKSEG_THREADS must be an integer, got {env!r}") from e
    return min(4, os.cpu_count() or 1)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, stem: str, command: str, cfg: PipelineConfig,
                    inputs: dict, outputs: list, overrides: dict) -> None:
    manifest = {
        "tool": "weakseg",
        "version": __version__,
        "command": command,
        "config": cfg.to_json(),
        "overrides": overrides,
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in inputs.items()},
        "outputs": sorted(outputs),
    }
    blob = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    tmp = out_dir / f".{stem}.manifest.tmp"
    tmp.write_text(blob)
    os.replace(tmp, out_dir / f"{stem}.manifest.json")


def _config_from_args(args) -> tuple[PipelineConfig, dict]:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    for flag, field in (
        ("thr_stride", "thr_stride"),
        ("loc_stride", "loc_stride"),
        ("loc_patch", "loc_patch"),
        ("otsu_mode", "otsu_mode"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "no_bilateral", False):
        overrides["enable_bilateral"] = False
    if getattr(args, "no_closing", False):
        overrides["enable_closing"] = False
    return cfg.with_overrides(**overrides), overrides


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise DatasetError(f"no images found in {directory}")
    return files


def _match_pairs(image_dir: Path, gt_dir: Path) -> list[tuple[Path, Path]]:
    images = _list_images(image_dir)
    gt_by_stem = {p.stem: p for p in _list_images(gt_dir)}
    pairs = []
    for img in images:
        gt = gt_by_stem.get(img.stem)
        if gt is None:
            raise DatasetError(f"no ground truth found for {img.name} in {gt_dir}")
        pairs.append((img, gt))
    return pairs


def cmd_segment(args) -> int:
    cfg, overrides = _config_from_args(args)
    if (args.scores is None) == (args.model is None):
        raise UsageError("provide exactly one of --scores or --model")
    if args.model is not None and args.model_manifest is None:
        raise UsageError("--model requires --model-manifest")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = load_image(args.image)
    h, w = img.shape
    cam = load_cam(args.cam, w, h)
    inputs = {"image": args.image, "cam": args.cam}
    if args.scores is not None:
        backend = FileScoreBackend.from_file(args.scores)
        inputs["scores"] = args.scores
    else:
        backend = TorchScriptBackend.from_files(args.model, args.model_manifest)
        inputs["model"] = args.model
        inputs["model_manifest"] = args.model_manifest
    stem = Path(args.image).stem
    outputs = []
    if args.debug:
        loc = localise(img, backend, cam, cfg)
        base = bilateral_filter(img, cfg.bilateral_params) if cfg.enable_bilateral else img
        thr = patch_threshold_segment(base, cfg.loc_patch, cfg.thr_stride, cfg.otsu_mode)
        conf = segment_with_localisation(img, loc, cfg)
        save_scoremap(loc, out_dir / f"{stem}.loc.smap")
        save_scoremap(thr.astype(np.float32), out_dir / f"{stem}.thr.smap")
        outputs += [f"{stem}.loc.smap", f"{stem}.thr.smap"]
    else:
        conf = segment(img, backend, cam, cfg)
    save_scoremap(conf, out_dir / f"{stem}.smap")
    save_gray_png(conf, out_dir / f"{stem}.png")
    outputs += [f"{stem}.smap", f"{stem}.png"]
    if args.overlay:
        save_overlay_png(img, conf, out_dir / f"{stem}.overlay.png")
        outputs.append(f"{stem}.overlay.png")
    _write_manifest(out_dir, stem, "segment", cfg, inputs, outputs, overrides)
    print(f"segment: wrote {len(outputs)} artifacts to {out_dir}")
    return 0


def cmd_goldstd(args) -> int:
    cfg, overrides = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _match_pairs(Path(args.image_dir), Path(args.gt_dir))

    def run_one(pair):
        img_path, gt_path = pair
        img = load_image(img_path)
        gt = load_mask(gt_path)
        if gt.shape != img.shape:
            raise DatasetError(f"{img_path.name}: image {img.shape} vs mask {gt.shape}")
        loc = gold_standard_localisation(gt, cfg)
        conf = segment_with_localisation(img, loc, cfg)
        save_scoremap(conf, out_dir / f"{img_path.stem}.smap")
        if args.png:
            save_gray_png(conf, out_dir / f"{img_path.stem}.png")
        return img_path.stem

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        stems = list(pool.map(run_one, pairs))
    inputs = {f"image:{i.name}": i for i, _ in pairs} | {f"gt:{g.name}": g for _, g in pairs}
    outputs = [f"{s}.smap" for s in stems]
    _write_manifest(out_dir, "goldstd", "goldstd", cfg, inputs, outputs, overrides)
    print(f"goldstd: wrote {len(stems)} maps to {out_dir}")
    return 0


def _load_prediction(path: Path) -> np.ndarray:
    if path.suffix == ".smap":
        return load_scoremap(path)
    return load_image(path)


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    if not pred_dir.is_dir():
        raise DatasetError(f"not a directory: {pred_dir}")
    preds_by_stem = {
        p.stem: p
        for p in sorted(pred_dir.iterdir())
        if p.suffix == ".smap" or p.suffix.lower() in IMAGE_EXTENSIONS
    }
    pairs = []
    for gt_path in _list_images(gt_dir):
        pred_path = preds_by_stem.get(gt_path.stem)
        if pred_path is None:
            raise DatasetError(f"no prediction found for {gt_path.name} in {pred_dir}")
        pairs.append((pred_path, gt_path))
    preds = [_load_prediction(p) for p, _ in pairs]
    gts = [load_mask(g) for _, g in pairs]
    result = macro_f1(preds, gts)
    report = result.curve_json()
    report["n_images"] = len(pairs)
    blob = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(blob + "\n")
    print(blob)
    return 0


def cmd_eval_cls(args) -> int:
    with open(args.csv) as f:
        rows = list(csv.DictReader(f))
    if not rows or "score" not in rows[0] or "label" not in rows[0]:
        raise DataError(f"{args.csv}: need CSV columns 'score' and 'label'")
    scores = [float(r["score"]) for r in rows]
    labels = [int(r["label"]) for r in rows]
    print(json.dumps({"f1": classification_f1(scores, labels), "n": len(rows)}))
    return 0


def cmd_tile(args) -> int:
    out_dir = Path(args.out)
    pos_dir, neg_dir = out_dir / "pos", out_dir / "neg"
    pos_dir.mkdir(parents=True, exist_ok=True)
    neg_dir.mkdir(parents=True, exist_ok=True)
    pairs = _match_pairs(Path(args.image_dir), Path(args.gt_dir))
    index_rows = []
    for img_path, gt_path in pairs:
        img = load_image(img_path)
        gt = load_mask(gt_path)
        if gt.shape != img.shape:
            raise DatasetError(f"{img_path.name}: image {img.shape} vs mask {gt.shape}")
        h, w = img.shape
        grid = make_patch_grid(w, h, args.patch, args.stride)
        pad_r, pad_b = grid.padded_extent()
        padded = np.pad(img, ((0, pad_b), (0, pad_r)), mode="reflect")
        labels = extract_patch_labels(gt, args.patch, args.stride)
        for gy, oy in enumerate(grid.y_origins):
            for gx, ox in enumerate(grid.x_origins):
                label = int(labels[gy, gx])
                tile = padded[oy : oy + args.patch, ox : ox + args.patch]
                name = f"{img_path.stem}_x{ox}_y{oy}.png"
                save_gray_png(tile, (pos_dir if label else neg_dir) / name)
                index_rows.append(
                    {"tile": name, "image": img_path.name, "x": ox, "y": oy, "label": label}
                )
    index_path = out_dir / "index.csv"
    with open(index_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["tile", "image", "x", "y", "label"])
        writer.writeheader()
        writer.writerows(index_rows)
    n_pos = sum(r["label"] for r in index_rows)
    print(f"tile: wrote {len(index_rows)} tiles ({n_pos} pos) to {out_dir}")
    return 0


def cmd_threshold(args) -> int:
    cfg, overrides = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = load_image(args.image)
    method = args.method
    if method in ("patch-otsu3", "patch-otsu2"):
        base = bilateral_filter(img, cfg.bilateral_params) if cfg.enable_bilateral else img
        mode = "three" if method == "patch-otsu3" else "two"
        mask = patch_threshold_segment(base, cfg.loc_patch, cfg.thr_stride, mode)
    elif method in ("otsu2", "otsu3"):
        mask = threshold_mask(img, "two" if method == "otsu2" else "three")
    elif method == "niblack":
        mask = niblack(img, args.window)
    elif method == "sauvola":
        mask = sauvola(img, args.window)
    else:
        raise UsageError(f"unknown method {method!r}")
    stem = Path(args.image).stem
    name = f"{stem}.{method}.png"
    save_gray_png(mask, out_dir / name)
    _write_manifest(out_dir, f"{stem}.{method}", "threshold", cfg,
                    {"image": args.image}, [name], overrides)
    print(f"threshold: wrote {name} to {out_dir}")
    return 0


def cmd_localize(args) -> int:
    cfg, overrides = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = load_image(args.image)
    h, w = img.shape
    cam = load_cam(args.cam, w, h)
    backend = FileScoreBackend.from_file(args.scores)
    loc = localise(img, backend, cam, cfg)
    stem = Path(args.image).stem
    save_scoremap(loc, out_dir / f"{stem}.loc.smap")
    _write_manifest(out_dir, f"{stem}.loc", "localize", cfg,
                    {"image": args.image, "scores": args.scores, "cam": args.cam},
                    [f"{stem}.loc.smap"], overrides)
    print(f"localize: wrote {stem}.loc.smap to {out_dir}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config file")
    p.add_argument("--thr-stride", dest="thr_stride", type=int)
    p.add_argument("--loc-stride", dest="loc_stride", type=int)
    p.add_argument("--loc-patch", dest="loc_patch", type=int)
    p.add_argument("--otsu-mode", dest="otsu_mode", choices=["two", "three"])
    p.add_argument("--no-bilateral", action="store_true")
    p.add_argument("--no-closing", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakseg",
        description="Weakly-supervised surface crack segmentation",
    )
    parser.add_argument("--version", action="version", version=f"weakseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image from scores/CAM or a model")
    p.add_argument("image")
    p.add_argument("--scores", help=".psg patch score grid")
    p.add_argument("--cam", required=True, help=".smap class activation map")
    p.add_argument("--model", help="TorchScript classifier")
    p.add_argument("--model-manifest", help="JSON manifest for --model")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--debug", action="store_true", help="also write interim maps")
    p.add_argument("--overlay", action="store_true", help="write a red-overlay PNG")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("goldstd", help="classifier-free upper bound over a dataset")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--png", action="store_true", help="also write PNG visualizations")
    _add_config_flags(p)
    p.set_defaults(func=cmd_goldstd)

    p = sub.add_parser("eval", help="macro-F1 of a prediction directory")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-cls", help="classification F1 from a score/label CSV")
    p.add_argument("csv")
    p.set_defaults(func=cmd_eval_cls)

    p = sub.add_parser("tile", help="export labeled classifier patches")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--stride", type=int, default=64)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("threshold", help="interim thresholding maps / baselines")
    p.add_argument("image")
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--method",
        default="patch-otsu3",
        choices=["patch-otsu3", "patch-otsu2", "otsu2", "otsu3", "niblack", "sauvola"],
    )
    p.add_argument("--window", type=int, default=33, help="window for niblack/sauvola")
    _add_config_flags(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("localize", help="interim coarse localisation map")
    p.add_argument("image")
    p.add_argument("--scores", required=True)
    p.add_argument("--cam", required=True)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_localize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FormatError, DataError, DatasetError, ConfigError, ShapeError, PaddingError,
            FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        kind = "internal error" if not isinstance(e, WeaksegError) else "error"
        print(f"{kind}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

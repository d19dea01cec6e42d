"""Trainer CLI: train, export-model, export-scores, export-cam."""

from __future__ import annotations

import argparse
import sys

from .config import DataError, ExportError, ManifestError, TrainConfig, TrainerError


def cmd_train(args) -> int:
    from .train import train

    overrides = {
        k: v
        for k, v in {
            "backbone": args.backbone,
            "epochs": args.epochs,
            "lr": args.lr,
            "seed": args.seed,
            "input_size": args.input_size,
            "batch_size": args.batch_size,
            "val_image_count": args.val_images,
        }.items()
        if v is not None
    }
    if args.no_pretrained:
        overrides["pretrained"] = False
    cfg = TrainConfig(**overrides)
    checkpoint = train(args.tiles, cfg, args.out)
    print(f"train: checkpoint at {checkpoint}")
    return 0


def cmd_export_model(args) -> int:
    from .export import export_model
    from .train import load_checkpoint

    model, cfg = load_checkpoint(args.checkpoint)
    model_path, manifest_path = export_model(model, cfg, args.out)
    print(f"export-model: wrote {model_path} and {manifest_path}")
    return 0


def cmd_export_scores(args) -> int:
    from .export import export_scores, load_gray_image
    from .train import load_checkpoint

    model, cfg = load_checkpoint(args.checkpoint)
    image = load_gray_image(args.image)
    export_scores(model, cfg, image, args.out, patch=args.patch, stride=args.stride)
    print(f"export-scores: wrote {args.out}")
    return 0


def cmd_export_cam(args) -> int:
    from .export import export_cam, load_gray_image
    from .train import load_checkpoint

    model, cfg = load_checkpoint(args.checkpoint)
    image = load_gray_image(args.image)
    export_cam(model, cfg, image, args.out)
    print(f"export-cam: wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakseg-trainer",
                                     description="Patch-classifier training and export")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier on tile output")
    p.add_argument("--tiles", required=True, help="directory from the tile command")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", choices=["resnet50", "resnet101", "resnet152"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--input-size", dest="input_size", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--val-images", dest="val_images", type=int,
                   help="source images held out for validation")
    p.add_argument("--no-pretrained", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export-model", help="TorchScript + manifest from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("export-scores", help="patch score grid (.psg) for an image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=32)
    p.add_argument("--stride", type=int, default=16)
    p.set_defaults(func=cmd_export_scores)

    p = sub.add_parser("export-cam", help="GradCAM++ map (.smap) for an image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_cam)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (DataError, ManifestError, ExportError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TrainerError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

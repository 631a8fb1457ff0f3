"""Command-line interface: preprocess, train, enhance, evaluate, plot.

Environment overrides: UWBRIGHT_OUT_DIR replaces any --out directory,
UWBRIGHT_DEVICE replaces the configured device.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .metrics import evaluate_dir, write_report
from .pipeline import TrainConfig, enhance, train
from .preprocess import build_training_set, save_triples


def _out_dir(value: str) -> Path:
    return Path(os.environ.get("UWBRIGHT_OUT_DIR", value))


def _load_config(args) -> TrainConfig:
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "epochs", "image_size", "batch_size")
    }
    device = os.environ.get("UWBRIGHT_DEVICE")
    if device:
        overrides["device"] = device
    return config.merged(overrides)


def cmd_preprocess(args) -> int:
    triples = build_training_set(args.data, args.seed, args.size)
    manifest = save_triples(triples, _out_dir(args.out))
    print(f"wrote {len(triples)} triples, manifest at {manifest}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    checkpoint = train(config, args.data, _out_dir(args.out), resume=args.resume)
    print(f"final checkpoint: {checkpoint}")
    return 0


def cmd_enhance(args) -> int:
    outputs = enhance(
        args.checkpoint,
        args.input,
        brightness=args.brightness,
        steps=args.steps,
        seed=args.seed,
        out_dir=_out_dir(args.out) if args.out else None,
        device=os.environ.get("UWBRIGHT_DEVICE"),
    )
    for path in outputs:
        print(path)
    return 0


def cmd_evaluate(args) -> int:
    report = evaluate_dir(args.pred, args.ref)
    json_path, csv_path = write_report(report, args.out)
    for name, value in sorted(report.aggregate.items()):
        print(f"{name}: {value:.4f}")
    for message in report.errors:
        print(f"error: {message}", file=sys.stderr)
    print(f"report: {json_path}, {csv_path}")
    return 0


def cmd_plot(args) -> int:
    from .plots import plot_loss_curve, plot_metric_bars

    if not args.log and not args.report:
        raise ValueError("plot needs --log and/or --report")
    out = _out_dir(args.out)
    written = []
    if args.log:
        written.append(plot_loss_curve(args.log, out / "loss_curve.png"))
    if args.report:
        written.append(plot_metric_bars(args.report, out / "metric_bars.png"))
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwbright",
        description="Unsupervised diffusion-based brightness enhancement for underwater images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build training triples from raw images")
    p.add_argument("--data", required=True, help="directory of raw images")
    p.add_argument("--out", required=True, help="output directory for triples")
    p.add_argument("--size", type=int, default=64, help="square training resolution")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the brightness-enhancement model")
    p.add_argument("--data", required=True, help="raw image dir or preprocessed triple dir")
    p.add_argument("--out", required=True, help="output directory (checkpoints, log)")
    p.add_argument("--config", help="JSON config file, merged over defaults")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--image-size", dest="image_size", type=int, help="override config image size")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="override config batch size")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--resume", action="store_true", help="continue from latest checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance images with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--brightness", type=float, default=0.55, help="target brightness in [0, 1]")
    p.add_argument("--steps", type=int, help="sampler steps (default from checkpoint config)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: alongside inputs)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="compute image-quality metrics for a directory")
    p.add_argument("--pred", required=True, help="directory of images to score")
    p.add_argument("--ref", help="directory of reference images (enables PSNR/SSIM)")
    p.add_argument("--out", required=True, help="report base path (.json and .csv written)")
    p.add_argument("--seed", type=int, default=0,
                   help="accepted for interface uniformity; evaluation is deterministic")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="render PNG plots from logs and reports")
    p.add_argument("--log", help="training log (JSON lines)")
    p.add_argument("--report", help="metric report (JSON)")
    p.add_argument("--out", required=True, help="output directory for PNGs")
    p.add_argument("--seed", type=int, default=0,
                   help="accepted for interface uniformity; plotting is deterministic")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help (0) and usage errors (2)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

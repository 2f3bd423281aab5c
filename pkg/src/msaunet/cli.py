"""Command-line entry point: train, eval, predict and metrics subcommands.

Exit codes: 0 success, 2 configuration/dataset problems, 3 numerical abort
during training.  Command-line overrides beat config-file values and the
effective config is echoed into the output directory.
"""

import argparse
import os
import sys

import numpy as np
from PIL import Image

from . import config as runconfig
from .data import class_palette, preprocess
from .exceptions import (CheckpointError, ConfigError, DataError,
                         NumericsError, ShapeError)
from .metrics import VOID_LABEL, ConfusionMatrix
from .network import build_msaunet, predict_mask
from .training import evaluate, load_model_from_checkpoint, train


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msaunet",
        description="Multi-scale attention upsampling segmentation toolkit",
        epilog=runconfig.help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config",
                             epilog=runconfig.help_text(),
                             formatter_class=argparse.RawDescriptionHelpFormatter)
    p_train.add_argument("--config", required=True, help="run config INI path")
    p_train.add_argument("--lr", type=float, help="override [optimizer] learning_rate")
    p_train.add_argument("--optimizer", help="override [optimizer] kind (sgd/rmsprop/adam)")
    p_train.add_argument("--epochs", type=int, help="override [optimizer] epochs")
    p_train.add_argument("--seed", type=int, help="override [optimizer] seed")
    p_train.add_argument("--out", help="override [output] dir")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the configured dataset")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", help="override [output] dir")

    p_pred = sub.add_parser("predict", help="segment images with a trained checkpoint")
    p_pred.add_argument("--config", required=True)
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", nargs="+", required=True, help="input image paths")
    p_pred.add_argument("--out", help="override [output] dir")
    p_pred.add_argument("--overlay", action="store_true",
                        help="also write color overlays next to the masks")

    p_met = sub.add_parser("metrics", help="score prediction masks against ground truth")
    p_met.add_argument("--pred", required=True, help="directory of predicted masks")
    p_met.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p_met.add_argument("--classes", type=int, required=True)
    return parser


def _load_run_config(args):
    values = runconfig.parse_run_config(args.config)
    if getattr(args, "lr", None) is not None:
        values["optimizer"]["learning_rate"] = args.lr
    if getattr(args, "optimizer", None) is not None:
        if args.optimizer not in ("sgd", "rmsprop", "adam"):
            raise ConfigError(f"invalid optimizer {args.optimizer!r}, "
                              "expected sgd, rmsprop or adam")
        values["optimizer"]["kind"] = args.optimizer
    if getattr(args, "epochs", None) is not None:
        values["optimizer"]["epochs"] = args.epochs
    if getattr(args, "seed", None) is not None:
        values["optimizer"]["seed"] = args.seed
    if getattr(args, "out", None):
        values["output"]["dir"] = args.out
    return runconfig.RunConfig(values)


def _dtype_of(cfg):
    return np.float32 if cfg.dtype == "float32" else np.float64


def cmd_train(args):
    cfg = _load_run_config(args)
    samples = cfg.dataset_samples()
    model = build_msaunet(cfg.model_config, cfg.seed, dtype=_dtype_of(cfg))
    out_dir = cfg.out_dir
    cfg.echo_to(out_dir)
    artifacts = train(model, samples, cfg.train_config, out_dir,
                      config_payload=cfg.values)
    print(f"trained {artifacts.epochs_run} epochs -> {artifacts.checkpoint_path}")
    print(artifacts.final_report.as_text(), end="")
    return 0


def cmd_eval(args):
    cfg = _load_run_config(args)
    samples = cfg.dataset_samples()
    void = cfg.loss_config.void_label
    model, _, _ = load_model_from_checkpoint(args.checkpoint, cfg.model_config,
                                             dtype=_dtype_of(cfg))
    report = evaluate(model, samples,
                      ignore_index=void if void is not None else VOID_LABEL)
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.txt"), "w") as fh:
        fh.write(report.as_text())
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(report.as_csv())
    print(report.as_text(), end="")
    return 0


def cmd_predict(args):
    cfg = _load_run_config(args)
    model, _, _ = load_model_from_checkpoint(args.checkpoint, cfg.model_config,
                                             dtype=_dtype_of(cfg))
    ds = cfg.values["dataset"]
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    palette = class_palette(cfg.model_config.num_classes)
    for path in args.input:
        if not os.path.isfile(path):
            raise DataError(f"input image not found: {path}")
        try:
            image = Image.open(path)
            image.load()
        except Exception as exc:
            raise DataError(f"cannot read image {path}: {exc}") from None
        x = preprocess(image, cfg.model_config.input_size,
                       mean=tuple(ds["mean"]), std=tuple(ds["std"]))
        logits = model.forward(x.astype(_dtype_of(cfg), copy=False))
        mask = predict_mask(logits).astype(np.uint8)
        stem = os.path.splitext(os.path.basename(path))[0]
        mask_img = Image.fromarray(mask, mode="P")
        mask_img.putpalette(palette.flatten().tolist() + [0] * (768 - palette.size))
        mask_path = os.path.join(out_dir, f"{stem}_mask.png")
        mask_img.save(mask_path)
        print(f"wrote {mask_path}")
        if args.overlay:
            rgb = np.asarray(image.convert("RGB").resize(mask.shape[::-1]))
            blend = (0.5 * rgb + 0.5 * palette[mask]).astype(np.uint8)
            overlay_path = os.path.join(out_dir, f"{stem}_overlay.png")
            Image.fromarray(blend).save(overlay_path)
            print(f"wrote {overlay_path}")
    return 0


def _read_mask_file(path):
    img = Image.open(path)
    if img.mode == "P":
        return np.asarray(img, dtype=np.int64)
    return np.asarray(img.convert("I"), dtype=np.int64)


def cmd_metrics(args):
    for d in (args.pred, args.gt):
        if not os.path.isdir(d):
            raise DataError(f"not a directory: {d}")
    preds = {os.path.splitext(n)[0]: os.path.join(args.pred, n)
             for n in sorted(os.listdir(args.pred))}
    gts = {os.path.splitext(n)[0]: os.path.join(args.gt, n)
           for n in sorted(os.listdir(args.gt))}
    if not preds:
        raise DataError(f"no prediction masks under {args.pred}")
    for stem in sorted(set(preds) ^ set(gts)):
        raise DataError(f"unmatched mask stem {stem!r} between {args.pred} and {args.gt}")
    cm = ConfusionMatrix(args.classes)
    for stem in sorted(preds):
        cm.accumulate(_read_mask_file(preds[stem]), _read_mask_file(gts[stem]))
    report = cm.report()
    print(report.as_text(), end="")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "metrics": cmd_metrics,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataError, CheckpointError, ShapeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

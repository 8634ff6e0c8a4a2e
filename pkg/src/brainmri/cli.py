"""Command-line entry point: ``brainmri <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    ArgumentError,
    CorruptCheckpointError,
    DegenerateHistogramError,
    EmptyRegionError,
    LayoutError,
    LoadError,
    NumericError,
)
from .imgcore import load_image, psnr
from .metrics import CLASS_NAMES
from .pipeline import (
    IMAGE_EXTENSIONS,
    STAGES,
    Manifest,
    PipelineConfig,
    augment_split,
    denoise_image,
    evaluate_checkpoint,
    ingest,
    load_config,
    load_split,
    preprocess_image,
    run_pipeline,
    save_image,
    set_option,
    write_evaluation,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("brainmri.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag dest -> config attribute path; applied only when the flag was given
_OVERRIDES = {
    "seed": "seed",
    "out": "out",
    "crop_threshold": "crop_threshold",
    "crop_margin": "crop_margin",
    "n4_iters": "n4.max_iterations",
    "n4_conv": "n4.convergence_threshold",
    "n4_sigma": "n4.field_smoothing_sigma",
    "method": "denoise_method",
    "sigma": "gaussian_sigma",
    "noise_sigma": "noise_sigma",
    "tv_weight": "tv.weight",
    "tv_iters": "tv.max_iters",
    "closing_radius": "closing_radius",
    "bimodal_cutoff": "bimodal_cutoff",
    "target_count": "target_count",
    "rotation_range": "augment.rotation_range",
    "width_shift": "augment.width_shift",
    "height_shift": "augment.height_shift",
    "fill": "augment.fill",
    "lr": "train.learning_rate",
    "batch_size": "train.batch_size",
    "epochs": "train.epochs",
    "dropout": "train.dropout_rate",
    "patience": "train.plateau_patience",
    "plateau_factor": "train.plateau_factor",
    "min_lr": "train.min_lr",
    "val_fraction": "val_fraction",
    "test_fraction": "test_fraction",
}


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="INI file with per-stage sections")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return p


def _crop_flags(p):
    p.add_argument("--crop-threshold", type=float)
    p.add_argument("--crop-margin", type=int)


def _n4_flags(p):
    p.add_argument("--n4-iters", type=int)
    p.add_argument("--n4-conv", type=float)
    p.add_argument("--n4-sigma", type=float, help="field smoothing sigma in pixels")


def _denoise_flags(p, method_default=None):
    p.add_argument("--method", choices=("gaussian", "tv", "bm3d"), default=method_default)
    p.add_argument("--sigma", type=float, help="gaussian filter sigma (pixels)")
    p.add_argument("--noise-sigma", type=float, help="bm3d noise standard deviation (intensity units)")
    p.add_argument("--tv-weight", type=float)
    p.add_argument("--tv-iters", type=int)


def _strip_flags(p):
    p.add_argument("--closing-radius", type=int)
    p.add_argument("--bimodal-cutoff", type=float)


def _augment_flags(p):
    p.add_argument("--target-count", type=int)
    p.add_argument("--rotation-range", type=float)
    p.add_argument("--width-shift", type=float)
    p.add_argument("--height-shift", type=float)
    p.add_argument("--no-hflip", action="store_true")
    p.add_argument("--no-vflip", action="store_true")
    p.add_argument("--fill", choices=("zero", "reflect"))


def _train_flags(p):
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--plateau-factor", type=float)
    p.add_argument("--min-lr", type=float)


def _split_flags(p):
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--test-fraction", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="brainmri", description="Brain MRI preprocessing and classification", parents=[common])
    parser.add_argument("--version", action="version", version=f"brainmri {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="scan a dataset tree and write manifest.txt")
    p.add_argument("root")
    _split_flags(p)

    p = sub.add_parser("preprocess", parents=[common], help="crop and bias-correct images")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--no-crop", action="store_true")
    p.add_argument("--no-bias", action="store_true")
    _crop_flags(p)
    _n4_flags(p)

    p = sub.add_parser("denoise", parents=[common], help="denoise images")
    p.add_argument("inputs", nargs="+")
    _denoise_flags(p)
    p.add_argument("--reference", help="clean image or directory of same-named images; writes psnr.csv")

    p = sub.add_parser("strip", parents=[common], help="skull-strip images")
    p.add_argument("inputs", nargs="+")
    _strip_flags(p)
    p.add_argument("--save-mask", action="store_true", help="also write <name>_mask.pgm")

    p = sub.add_parser("augment", parents=[common], help="balance class directories with synthetic images")
    p.add_argument("root", help="directory with one subdirectory per class")
    _augment_flags(p)

    p = sub.add_parser("train", parents=[common], help="train on a manifest's train split")
    p.add_argument("manifest")
    p.add_argument("--augmented", help="directory of augmented <class>/*.pgm added to training")
    p.add_argument("--preprocess", action="store_true", help="apply the configured image stages while loading")
    _train_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on a manifest split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--preprocess", action="store_true", help="apply the configured image stages while loading")

    p = sub.add_parser("predict", parents=[common], help="classify images")
    p.add_argument("checkpoint")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    p.add_argument("root", nargs="?")
    p.add_argument("--no-intermediates", action="store_true")
    p.add_argument("--skip", action="append", default=[], choices=STAGES, help="disable a stage (repeatable)")
    _split_flags(p)
    _crop_flags(p)
    _n4_flags(p)
    _denoise_flags(p)
    _strip_flags(p)
    _augment_flags(p)
    _train_flags(p)
    return parser


def _make_config(args) -> PipelineConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    for dest, path in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            config = set_option(config, path, value)
    if getattr(args, "no_hflip", False):
        config = set_option(config, "augment.hflip", False)
    if getattr(args, "no_vflip", False):
        config = set_option(config, "augment.vflip", False)
    if config.augment.seed != config.seed:
        config = set_option(config, "augment.seed", config.seed)
    return config


def _gather(inputs) -> list[tuple[str, str]]:
    """``(path, output_relpath)`` pairs; directories are walked recursively."""
    found = []
    for item in inputs:
        if os.path.isdir(item):
            for dirpath, dirnames, filenames in os.walk(item):
                dirnames.sort()
                for f in sorted(filenames):
                    if f.lower().endswith(IMAGE_EXTENSIONS):
                        full = os.path.join(dirpath, f)
                        found.append((full, os.path.relpath(full, item)))
        elif os.path.isfile(item):
            found.append((item, os.path.basename(item)))
        else:
            raise LoadError(f"{item}: no such file or directory")
    if not found:
        raise LoadError("no input images found")
    return found


def _out_path(out_dir, rel, suffix=""):
    stem = os.path.splitext(rel)[0]
    return os.path.join(out_dir, stem + suffix + ".pgm")


def cmd_ingest(args, config):
    m = ingest(args.root, config.seed, config.val_fraction, config.test_fraction)
    os.makedirs(config.out, exist_ok=True)
    path = os.path.join(config.out, "manifest.txt")
    m.save(path)
    for cls, n in m.counts().items():
        split = {s: m.counts(s)[cls] for s in ("train", "val", "test")}
        print(f"{cls:<12} {n:>6}  train {split['train']:>5}  val {split['val']:>5}  test {split['test']:>5}")
    print(f"{'total':<12} {m.total:>6}")
    print(f"wrote {path}")


def cmd_preprocess(args, config):
    stages = {s: False for s in STAGES}
    stages["crop"] = not args.no_crop
    stages["bias"] = not args.no_bias
    config = dataclasses.replace(config, stages=stages)
    for path, rel in _gather(args.inputs):
        res = preprocess_image(load_image(path), config)
        save_image(res.image, _out_path(config.out, rel))
        if "bias_field" in res.outputs:
            save_image(res.outputs["bias_field"], _out_path(config.out, rel, "_logfield"))
        print(f"{path} -> {_out_path(config.out, rel)}")


def _reference_for(ref, rel):
    if ref is None:
        return None
    if os.path.isdir(ref):
        cand = os.path.join(ref, rel)
        if not os.path.isfile(cand):
            raise LoadError(f"no reference image for {rel} in {ref}")
        return cand
    return ref


def cmd_denoise(args, config):
    config.validate()
    rows = []
    for path, rel in _gather(args.inputs):
        img = load_image(path)
        out = np.clip(denoise_image(img, config), 0.0, 1.0)
        dst = _out_path(config.out, rel)
        save_image(out, dst)
        ref_path = _reference_for(args.reference, rel)
        if ref_path:
            ref = load_image(ref_path)
            rows.append((rel, config.denoise_method, psnr(ref, img), psnr(ref, out)))
        print(f"{path} -> {dst}")
    if rows:
        csv_path = os.path.join(config.out, "psnr.csv")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image", "method", "psnr_input", "psnr_output"])
            for rel, method, a, b in rows:
                w.writerow([rel, method, f"{a:.4f}", f"{b:.4f}"])
        print(f"wrote {csv_path}")


def cmd_strip(args, config):
    from .skullstrip import strip_skull

    for path, rel in _gather(args.inputs):
        stripped, mask = strip_skull(load_image(path), config.bimodal_cutoff, config.closing_radius)
        save_image(stripped, _out_path(config.out, rel))
        if args.save_mask:
            save_image(mask.astype(np.float64), _out_path(config.out, rel, "_mask"))
        print(f"{path} -> {_out_path(config.out, rel)}")


def cmd_augment(args, config):
    missing = [c for c in CLASS_NAMES if not os.path.isdir(os.path.join(args.root, c))]
    if missing:
        raise LayoutError(f"{args.root}: missing class directories {', '.join(missing)}")
    by_class = {}
    for cls in CLASS_NAMES:
        files = _gather([os.path.join(args.root, cls)]) if os.listdir(os.path.join(args.root, cls)) else []
        files = [(p, r) for p, r in files if "_aug" not in os.path.basename(r)]
        by_class[cls] = [(os.path.splitext(r)[0].replace(os.sep, "__"), load_image(p)) for p, r in files]
    plan, synth = augment_split(by_class, config.augment, config.target_count)
    for cls, name, img in synth:
        save_image(img, os.path.join(config.out, cls, name + ".pgm"))
    for cls in CLASS_NAMES:
        print(f"{cls:<12} {len(by_class[cls]):>6} + {plan[cls]:>5}")
    print(f"wrote {len(synth)} images under {config.out}")


def cmd_train(args, config):
    from .nnet import build_model, save_checkpoint, train

    manifest = Manifest.load(args.manifest)
    pre = config if args.preprocess else None
    x, y = load_split(manifest, "train", config.size, pre)
    if args.augmented:
        extra, labels = [], []
        for label, cls in enumerate(CLASS_NAMES):
            d = os.path.join(args.augmented, cls)
            if os.path.isdir(d):
                for path, _ in _gather([d]):
                    extra.append(load_image(path))
                    labels.append(label)
        if extra:
            x = np.concatenate([x, np.stack([_fit(e, config.size) for e in extra])])
            y = np.concatenate([y, labels])
    xv, yv = load_split(manifest, "val", config.size, pre)
    tc = dataclasses.replace(config.train, seed=config.seed)
    model = build_model(num_classes=len(CLASS_NAMES), dropout_rate=tc.dropout_rate, seed=config.seed)
    model, curves = train(model, (x, y), tc, validation=(xv, yv) if len(yv) else None)
    os.makedirs(config.out, exist_ok=True)
    save_checkpoint(model, os.path.join(config.out, "model.ckpt"))
    with open(os.path.join(config.out, "curves.csv"), "w", newline="\n") as fh:
        fh.write(curves.to_csv())
    print(f"final val_acc {curves.val_acc[-1]:.4f}; wrote model.ckpt and curves.csv to {config.out}")


def _fit(img, size):
    from .imgcore import resize_bilinear

    return img if img.shape == (size, size) else resize_bilinear(img, size, size)


def cmd_evaluate(args, config):
    manifest = Manifest.load(args.manifest)
    pre = config if args.preprocess else None
    result = evaluate_checkpoint(args.checkpoint, manifest, args.split, config.size, pre)
    os.makedirs(config.out, exist_ok=True)
    write_evaluation(config.out, result)
    print(result["report"].to_text(), end="")


def cmd_predict(args, config):
    from .nnet import load_checkpoint, predict

    model = load_checkpoint(args.checkpoint)
    rows = []
    for path, _ in _gather(args.inputs):
        probs, label = predict(model, load_image(path))
        rows.append((path, CLASS_NAMES[label], probs))
        print(f"{path}\t{CLASS_NAMES[label]}\t" + " ".join(f"{p:.4f}" for p in probs))
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", "label", *CLASS_NAMES])
        for path, label, probs in rows:
            w.writerow([path, label, *(f"{p:.6f}" for p in probs)])


def cmd_pipeline(args, config):
    if args.root:
        config = dataclasses.replace(config, root=args.root)
    if not config.root:
        raise UsageError("pipeline: dataset root required (argument or [pipeline] root in --config)")
    if args.no_intermediates:
        config = dataclasses.replace(config, intermediates=False)
    if args.skip:
        stages = dict(config.stages)
        for s in args.skip:
            stages[s] = False
        config = dataclasses.replace(config, stages=stages)
    rep = run_pipeline(config)
    ev = rep["stages"].get("evaluate")
    if ev:
        print(f"test accuracy {ev['overall_accuracy']:.4f} on {ev['test_images']} images")
    for w in rep["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote report.json under {config.out}")


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "denoise": cmd_denoise,
    "strip": cmd_strip,
    "augment": cmd_augment,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(
        level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _make_config(args)
        COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LoadError, LayoutError, CorruptCheckpointError, EmptyRegionError, DegenerateHistogramError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

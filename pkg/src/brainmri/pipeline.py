"""End-to-end orchestration: ingest, per-image preprocessing, augmentation, training, evaluation.

Every artifact is a function of the dataset bytes, the config and the seed.
Wall-clock timings go to ``timings.json`` so the rest of the output tree can be
compared byte for byte between runs.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_sample, balance_classes, plan_sources
from .biasfield import N4Params, correct_bias, estimate_bias_n4, otsu_foreground
from .crop import DEFAULT_THRESHOLD, crop_box
from .denoise import Bm3dProfile, TvParams, bm3d, gaussian_filter, tv_denoise
from .errors import ArgumentError, LayoutError
from .imgcore import NETWORK_SIZE, load_image, resize_bilinear, save_pgm
from .metrics import CLASS_NAMES, confusion, confusion_csv, report
from .nnet import TrainConfig, build_model, load_checkpoint, save_checkpoint, train
from .skullstrip import DEFAULT_CLOSING_RADIUS, DEFAULT_CUTOFF, strip_skull

log = logging.getLogger(__name__)

STAGES = ("crop", "bias", "denoise", "strip", "augment", "train", "evaluate")
IMAGE_STAGES = ("crop", "bias", "denoise", "strip")
IMAGE_EXTENSIONS = (".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
SPLITS = ("train", "val", "test")
LOG_FIELD_SPAN = 1.0


@dataclass
class PipelineConfig:
    root: str = ""
    out: str = "out"
    seed: int = 0
    stages: dict = field(default_factory=lambda: {s: True for s in STAGES})
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    size: int = NETWORK_SIZE
    crop_threshold: float = DEFAULT_THRESHOLD
    crop_margin: int = 0
    n4: N4Params = field(default_factory=N4Params)
    denoise_method: str = "bm3d"
    gaussian_sigma: float = 1.0
    noise_sigma: float = 0.03
    tv: TvParams = field(default_factory=TvParams)
    closing_radius: int = DEFAULT_CLOSING_RADIUS
    bimodal_cutoff: float = DEFAULT_CUTOFF
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    target_count: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    intermediates: bool = True

    def validate(self) -> None:
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ArgumentError(f"unknown stage(s): {', '.join(sorted(unknown))}")
        if self.denoise_method not in ("gaussian", "tv", "bm3d"):
            raise ArgumentError(f"denoise method must be gaussian, tv or bm3d, got {self.denoise_method!r}")
        if not (0 <= self.val_fraction and 0 <= self.test_fraction and self.val_fraction + self.test_fraction < 1):
            raise ArgumentError("split fractions must be non-negative and leave room for training")
        if self.size < 8:
            raise ArgumentError("network input size too small")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d["root"] = os.path.basename(os.path.normpath(self.root)) if self.root else ""
        return d


_BOOL = {"1": True, "yes": True, "true": True, "on": True, "0": False, "no": False, "false": False, "off": False}


def _parse_bool(v: str) -> bool:
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise ArgumentError(f"not a boolean: {v!r}") from None


# INI section -> {key: (config attribute path, type)}
_INI_KEYS = {
    "pipeline": {
        "root": ("root", str), "out": ("out", str), "seed": ("seed", int), "size": ("size", int),
        "intermediates": ("intermediates", _parse_bool),
    },
    "split": {"val": ("val_fraction", float), "test": ("test_fraction", float)},
    "crop": {"threshold": ("crop_threshold", float), "margin": ("crop_margin", int)},
    "bias": {
        "iterations": ("n4.max_iterations", int), "convergence": ("n4.convergence_threshold", float),
        "sigma": ("n4.field_smoothing_sigma", float), "bins": ("n4.histogram_bins", int),
        "fwhm": ("n4.fwhm", float), "wiener_noise": ("n4.wiener_noise", float),
    },
    "denoise": {
        "method": ("denoise_method", str), "sigma": ("gaussian_sigma", float),
        "noise_sigma": ("noise_sigma", float), "tv_weight": ("tv.weight", float),
        "tv_iters": ("tv.max_iters", int), "tv_tol": ("tv.tol", float),
    },
    "strip": {"closing_radius": ("closing_radius", int), "bimodal_cutoff": ("bimodal_cutoff", float)},
    "augment": {
        "target_count": ("target_count", int), "rotation_range": ("augment.rotation_range", float),
        "width_shift": ("augment.width_shift", float), "height_shift": ("augment.height_shift", float),
        "hflip": ("augment.hflip", _parse_bool), "vflip": ("augment.vflip", _parse_bool),
        "fill": ("augment.fill", str),
    },
    "train": {
        "learning_rate": ("train.learning_rate", float), "batch_size": ("train.batch_size", int),
        "epochs": ("train.epochs", int), "dropout": ("train.dropout_rate", float),
        "patience": ("train.plateau_patience", int), "factor": ("train.plateau_factor", float),
        "min_lr": ("train.min_lr", float),
    },
}


def set_option(config: PipelineConfig, path: str, value) -> PipelineConfig:
    """Return a copy of ``config`` with the dotted attribute ``path`` replaced."""
    head, _, rest = path.partition(".")
    if not rest:
        return dataclasses.replace(config, **{head: value})
    sub = getattr(config, head)
    return dataclasses.replace(config, **{head: dataclasses.replace(sub, **{rest: value})})


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read an INI file; one section per stage plus ``[pipeline]``, ``[split]`` and ``[stages]``."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ArgumentError(f"{path}: {exc}") from None
    config = base or PipelineConfig()
    for section in parser.sections():
        if section == "stages":
            stages = dict(config.stages)
            for key, value in parser.items(section):
                if key not in STAGES:
                    raise ArgumentError(f"{path}: unknown stage {key!r}")
                stages[key] = _parse_bool(value)
            config = dataclasses.replace(config, stages=stages)
            continue
        keys = _INI_KEYS.get(section)
        if keys is None:
            raise ArgumentError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in keys:
                raise ArgumentError(f"{path}: unknown key {key!r} in [{section}]")
            attr, conv = keys[key]
            try:
                config = set_option(config, attr, conv(value))
            except ValueError as exc:
                raise ArgumentError(f"{path}: [{section}] {key}: {exc}") from None
    return config


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the dataset root, '/' separated
    label: int
    split: str

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.label]

    @property
    def stem(self) -> str:
        rel = self.path.split("/", 1)[1]
        return os.path.splitext(rel)[0].replace("/", "__")


@dataclass
class Manifest:
    root: str
    seed: int
    entries: list[ManifestEntry]

    def counts(self, split: str | None = None) -> dict[str, int]:
        out = {c: 0 for c in CLASS_NAMES}
        for e in self.entries:
            if split is None or e.split == split:
                out[e.class_name] += 1
        return out

    @property
    def total(self) -> int:
        return len(self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_text(self) -> str:
        lines = ["# brainmri manifest v1", f"# root {self.root}", f"# seed {self.seed}", f"# total {self.total}"]
        for c, n in self.counts().items():
            lines.append(f"# class {c} {n}")
        lines.extend(f"{e.split}\t{e.label}\t{e.path}" for e in self.entries)
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path, root: str | None = None) -> "Manifest":
        """Read a saved manifest; ``root`` overrides the recorded dataset root."""
        seed = 0
        recorded = None
        lineno = 0
        entries = []
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    if line.startswith("# root "):
                        recorded = line[len("# root ") :]
                        continue
                    if line.startswith("#"):
                        parts = line[1:].split()
                        if len(parts) == 2 and parts[0] == "seed":
                            seed = int(parts[1])
                        continue
                    split, label, rel = line.split("\t")
                    if split not in SPLITS or not 0 <= int(label) < len(CLASS_NAMES):
                        raise ValueError("bad split or label")
                    entries.append(ManifestEntry(rel, int(label), split))
        except (ValueError, UnicodeDecodeError) as exc:
            raise LayoutError(f"{path}: malformed manifest line {lineno}: {exc}") from None
        if root is None:
            root = recorded or os.path.dirname(os.path.abspath(path))
        return cls(root=root, seed=seed, entries=entries)

    def full_path(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, *entry.path.split("/"))


def _split_counts(n: int, val: float, test: float) -> tuple[int, int]:
    n_test = int(np.floor(n * test + 0.5))
    n_val = min(int(np.floor(n * val + 0.5)), n - n_test)
    return n_val, n_test


def ingest(root, seed: int = 0, val_fraction: float = 0.1, test_fraction: float = 0.2) -> Manifest:
    """Scan ``root/<class>/`` recursively and assign a seeded stratified split."""
    if not os.path.isdir(root):
        raise LayoutError(f"dataset root {root} is not a directory")
    missing = [c for c in CLASS_NAMES if not os.path.isdir(os.path.join(root, c))]
    if missing:
        raise LayoutError(f"{root}: missing class director{'y' if len(missing) == 1 else 'ies'} {', '.join(missing)}")
    entries = []
    for label, cls in enumerate(CLASS_NAMES):
        files = []
        base = os.path.join(root, cls)
        for dirpath, dirnames, filenames in os.walk(base):
            dirnames.sort()
            rel_dir = os.path.relpath(dirpath, root).replace(os.sep, "/")
            files.extend(f"{rel_dir}/{f}" for f in filenames if f.lower().endswith(IMAGE_EXTENSIONS))
        files.sort()
        if not files:
            log.warning("ingest: class %s has no images", cls)
        n_val, n_test = _split_counts(len(files), val_fraction, test_fraction)
        order = np.random.default_rng([seed, label]).permutation(len(files))
        split = ["train"] * len(files)
        for rank, idx in enumerate(order):
            if rank < n_test:
                split[idx] = "test"
            elif rank < n_test + n_val:
                split[idx] = "val"
        entries.extend(ManifestEntry(f, label, s) for f, s in zip(files, split))
    return Manifest(root=os.path.abspath(root), seed=seed, entries=entries)


# ---------------------------------------------------------------- per-image stages


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def encode_log_field(log_field, span: float = LOG_FIELD_SPAN) -> np.ndarray:
    """Map a log field in [-span, span] to [0, 1] (0.5 means no bias) for PGM output."""
    return np.clip(0.5 + np.asarray(log_field) / (2 * span), 0.0, 1.0)


def denoise_image(image, config: PipelineConfig) -> np.ndarray:
    if config.denoise_method == "gaussian":
        return gaussian_filter(image, config.gaussian_sigma)
    if config.denoise_method == "tv":
        return tv_denoise(image, config.tv)
    return bm3d(image, Bm3dProfile(sigma=config.noise_sigma))


@dataclass
class StageResult:
    image: np.ndarray
    outputs: dict[str, np.ndarray] = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def preprocess_image(image, config: PipelineConfig) -> StageResult:
    """Run the enabled image stages in fixed order: crop, bias, denoise, strip.

    ``outputs`` holds each stage's image (plus the bias field and brain mask)
    keyed by stage name; the final image is always ``size`` square.
    """
    st = config.stages
    n = config.size
    img = np.asarray(image, dtype=np.float64)
    res = StageResult(img)
    if st.get("crop"):
        box = crop_box(img, config.crop_threshold, config.crop_margin)
        if box is None:
            log.warning("crop: no foreground above threshold %.4f; using full frame", config.crop_threshold)
            res.info["crop_fallback"] = True
        else:
            x0, y0, x1, y1 = box
            img = img[y0 : y1 + 1, x0 : x1 + 1]
        img = resize_bilinear(img, n, n)
        res.outputs["crop"] = img
    elif img.shape != (n, n):
        img = resize_bilinear(img, n, n)
    if st.get("bias"):
        mask = otsu_foreground(img) & (img > 0)
        if mask.any():
            bf = estimate_bias_n4(img, mask, config.n4)
            img = correct_bias(img, bf)
            res.outputs["bias_field"] = encode_log_field(bf.log_field)
            res.info["n4_iterations"] = bf.iterations
        else:
            log.warning("bias: empty foreground; correction skipped")
            res.info["n4_iterations"] = 0
        res.outputs["bias"] = img
    if st.get("denoise"):
        img = np.clip(denoise_image(img, config), 0.0, 1.0)
        res.outputs["denoise"] = img
    if st.get("strip"):
        img, mask = strip_skull(img, config.bimodal_cutoff, config.closing_radius)
        res.outputs["strip"] = img
        res.outputs["strip_mask"] = mask.astype(np.float64)
        res.info["brain_fraction"] = float(mask.mean())
    res.image = img
    return res


def save_image(image, path) -> None:
    """``save_pgm`` that creates the parent directory first."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_pgm(image, path)


def _stage_dir(config: PipelineConfig, name: str) -> str:
    order = {"crop": 1, "bias": 2, "bias_field": 2, "denoise": 3, "strip": 4, "strip_mask": 4}
    return os.path.join(config.out, "stages", f"{order[name]}_{name}")


# ---------------------------------------------------------------- whole run


def load_split(
    manifest: Manifest, split: str, size: int = NETWORK_SIZE, config: PipelineConfig | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Load one split at ``size``; with ``config`` its image stages are applied as in ``run_pipeline``."""
    entries = manifest.split(split)
    if config is not None:
        size = config.size
        xs = [preprocess_image(load_image(manifest.full_path(e)), config).image for e in entries]
    else:
        xs = [_fit(load_image(manifest.full_path(e)), size) for e in entries]
    x = np.stack(xs) if xs else np.zeros((0, size, size))
    return x, np.array([e.label for e in entries], dtype=np.intp)


def _fit(img, size):
    return img if img.shape == (size, size) else resize_bilinear(img, size, size)


def augment_split(images_by_class: dict[str, list[tuple[str, np.ndarray]]], config: AugmentConfig, target: int | None):
    """Offline balancing; returns ``(plan, samples)`` with one ``(class, name, image)`` per synthetic image.

    Draw indices are numbered per class so a class's synthetic set does not
    depend on the others.
    """
    counts = {c: len(v) for c, v in images_by_class.items()}
    if target is None:
        target = max(counts.values(), default=0)
    plan = balance_classes(counts, target)
    out = []
    for label, cls in enumerate(CLASS_NAMES):
        sources = images_by_class.get(cls, [])
        need = plan.get(cls, 0)
        if need and not sources:
            log.warning("augment: class %s has no training images to augment", cls)
            continue
        cfg = dataclasses.replace(config, seed=(config.seed * 1000003 + label) & 0xFFFFFFFFFFFFFFFF)
        for i, (src, k) in enumerate(plan_sources(len(sources), need)):
            name, img = sources[src]
            out.append((cls, f"{name}_aug{k}", augment_sample(img, cfg, i)))
    return plan, out


def evaluate_model(model, x, y) -> dict:
    if len(y) == 0:
        raise ArgumentError("evaluation split is empty")
    pred = np.argmax(model.predict_proba(x), axis=1)
    cm = confusion(pred, y, model.num_classes)
    return {"matrix": cm, "report": report(cm)}


def write_evaluation(out_dir: str, result: dict) -> None:
    rep = result["report"]
    with open(os.path.join(out_dir, "confusion.csv"), "w", newline="\n") as fh:
        fh.write(confusion_csv(result["matrix"]))
    with open(os.path.join(out_dir, "report.txt"), "w", newline="\n") as fh:
        fh.write(rep.to_text())
    with open(os.path.join(out_dir, "report.csv"), "w", newline="\n") as fh:
        fh.write(rep.to_csv())


def _json_dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every enabled stage and write artifacts under ``config.out``; returns the report."""
    config.validate()
    os.makedirs(config.out, exist_ok=True)
    timings: dict[str, float] = {}
    collector = _WarningCollector()
    pkg_log = logging.getLogger("brainmri")
    pkg_log.addHandler(collector)
    try:
        return _run(config, timings, collector)
    finally:
        pkg_log.removeHandler(collector)
        _json_dump(timings, os.path.join(config.out, "timings.json"))


def _run(config: PipelineConfig, timings: dict, collector: _WarningCollector) -> dict:
    st = config.stages
    rep: dict = {"config": config.to_dict(), "stages": {}, "warnings": []}

    t0 = time.perf_counter()
    manifest = ingest(config.root, config.seed, config.val_fraction, config.test_fraction)
    manifest.save(os.path.join(config.out, "manifest.txt"))
    rep["stages"]["ingest"] = {
        "total": manifest.total,
        "counts": manifest.counts(),
        "splits": {s: manifest.counts(s) for s in SPLITS},
    }
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    processed: dict[str, list] = {s: [] for s in SPLITS}
    per_image = {}
    for e in manifest.entries:
        mark = len(collector.messages)
        try:
            img = load_image(manifest.full_path(e))
            res = preprocess_image(img, config)
        except Exception as exc:
            exc.args = (f"{e.path}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        for msg in collector.messages[mark:]:
            rep["warnings"].append(f"{e.path}: {msg}")
        per_image[e.path] = res.info
        if config.intermediates:
            for name, out in res.outputs.items():
                save_image(out, os.path.join(_stage_dir(config, name), e.class_name, e.stem + ".pgm"))
        processed[e.split].append((e, res.image))
    rep["stages"]["preprocess"] = {
        "enabled": [s for s in IMAGE_STAGES if st.get(s)],
        "denoise_method": config.denoise_method if st.get("denoise") else None,
        "images": per_image,
    }
    timings["preprocess"] = time.perf_counter() - t0

    train_x = [img for _, img in processed["train"]]
    train_y = [e.label for e, _ in processed["train"]]
    if st.get("augment"):
        t0 = time.perf_counter()
        by_class: dict[str, list] = {c: [] for c in CLASS_NAMES}
        for e, img in processed["train"]:
            by_class[e.class_name].append((e.stem, img))
        mark = len(collector.messages)
        plan, synth = augment_split(by_class, config.augment, config.target_count)
        rep["warnings"].extend(collector.messages[mark:])
        for cls, name, img in synth:
            save_image(img, os.path.join(config.out, "augmented", cls, name + ".pgm"))
            train_x.append(img)
            train_y.append(CLASS_NAMES.index(cls))
        rep["stages"]["augment"] = {"plan": plan, "synthetic": len(synth)}
        timings["augment"] = time.perf_counter() - t0

    model = None
    if st.get("train"):
        t0 = time.perf_counter()
        if not train_x:
            raise ArgumentError("training split is empty")
        val = processed["val"]
        xv = np.stack([img for _, img in val]) if val else np.zeros((0, config.size, config.size))
        yv = np.array([e.label for e, _ in val], dtype=np.intp)
        tc = dataclasses.replace(config.train, seed=config.seed)
        model = build_model(num_classes=len(CLASS_NAMES), dropout_rate=tc.dropout_rate, seed=config.seed)
        model, curves = train(model, (np.stack(train_x), np.array(train_y)), tc, validation=(xv, yv))
        save_checkpoint(model, os.path.join(config.out, "model.ckpt"))
        with open(os.path.join(config.out, "curves.csv"), "w", newline="\n") as fh:
            fh.write(curves.to_csv())
        rep["stages"]["train"] = {
            "train_images": len(train_y),
            "val_images": int(len(yv)),
            "epochs": len(curves.lr),
            "final": {
                "train_loss": curves.train_loss[-1],
                "train_acc": curves.train_acc[-1],
                "val_loss": curves.val_loss[-1],
                "val_acc": curves.val_acc[-1],
                "lr": curves.lr[-1],
            },
        }
        timings["train"] = time.perf_counter() - t0

    if st.get("evaluate") and model is not None:
        t0 = time.perf_counter()
        test = processed["test"]
        if not test:
            rep["warnings"].append("evaluate: test split is empty; skipped")
        else:
            x = np.stack([img for _, img in test])
            y = np.array([e.label for e, _ in test], dtype=np.intp)
            result = evaluate_model(model, x, y)
            write_evaluation(config.out, result)
            r = result["report"]
            rep["stages"]["evaluate"] = {
                "test_images": int(len(y)),
                "overall_accuracy": r.overall_accuracy,
                "confusion": result["matrix"],
                "per_class": {c: dataclasses.asdict(m) for c, m in r.per_class.items()},
                "macro": r.macro,
            }
        timings["evaluate"] = time.perf_counter() - t0

    _json_dump(rep, os.path.join(config.out, "report.json"))
    return rep


def evaluate_checkpoint(
    checkpoint, manifest: Manifest, split: str = "test", size: int = NETWORK_SIZE, config: PipelineConfig | None = None
) -> dict:
    model = load_checkpoint(checkpoint)
    x, y = load_split(manifest, split, size, config)
    return evaluate_model(model, x, y)

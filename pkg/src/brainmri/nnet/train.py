"""Mini-batch training loop: Adam + CCE + reduce-on-plateau, fully seeded."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError
from .layers import cce_loss, cce_softmax_grad, one_hot, softmax
from .model import Model
from .optim import AdamState, ReduceLROnPlateau, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 32
    epochs: int = 12
    dropout_rate: float = 0.2
    plateau_patience: int = 2
    plateau_factor: float = 0.3
    min_lr: float = 1e-6
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError("learning_rate must be > 0")
        if not 0 <= self.dropout_rate < 1:
            raise ArgumentError("dropout_rate must be in [0, 1)")
        if self.plateau_patience < 1:
            raise ArgumentError("plateau_patience must be >= 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ArgumentError("batch_size and epochs must be >= 1")


@dataclass
class TrainingCurves:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc,lr"]
        for i in range(len(self.lr)):
            lines.append(
                f"{i + 1},{self.train_loss[i]:.10g},{self.train_acc[i]:.10g},"
                f"{self.val_loss[i]:.10g},{self.val_acc[i]:.10g},{self.lr[i]:.10g}"
            )
        return "\n".join(lines) + "\n"


def stratified_split(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(keep, held_out)`` with ``round(fraction * n_k)`` held out per class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    keep, held = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        held.append(idx[:k])
        keep.append(idx[k:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(held))


FEATURE_CACHE_BYTES = 1 << 29


def _batches(n: int, size: int) -> list[tuple[int, int]]:
    """Batch bounds; a trailing batch of one is merged into the previous one
    because batch statistics of a single sample are undefined."""
    bounds = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        bounds[-2:] = [(bounds[-2][0], n)]
    return bounds


def _feature_bytes(model: Model, x, end: int) -> int:
    probe = model.features(x[:1], end)
    return probe.nbytes * len(x)


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 3 else x


def evaluate_batch(model: Model, x, y, batch_size: int = 64, start: int = 0) -> tuple[float, float]:
    probs = model.predict_proba(x, batch_size, start=start)
    return cce_loss(probs, one_hot(y, model.num_classes)), float(np.mean(np.argmax(probs, axis=1) == y))


def train(model: Model, dataset, config: TrainConfig = TrainConfig(), validation=None) -> tuple[Model, TrainingCurves]:
    """Train ``model`` in place on ``dataset = (images, labels)``.

    Without an explicit ``validation`` pair a stratified ``validation_fraction``
    split is held out. Frozen layers are not updated; when the leading layers
    are all frozen their output is computed once and reused every epoch.
    """
    x, y = dataset
    x = _as_batch(x)
    y = np.asarray(y, dtype=np.intp)
    if x.shape[0] == 0:
        raise ArgumentError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise ArgumentError("images and labels differ in length")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ArgumentError(f"labels must lie in 0..{model.num_classes - 1}")
    if np.unique(y).size < 2:
        raise ArgumentError("training needs at least two classes")
    if validation is None:
        tr, va = stratified_split(y, config.validation_fraction, config.seed)
        xv, yv = x[va], y[va]
        x, y = x[tr], y[tr]
    else:
        xv, yv = _as_batch(validation[0]), np.asarray(validation[1], dtype=np.intp)

    for layer in model.layers:
        if layer.kind == "dropout":
            layer.rate = config.dropout_rate

    start = model.frozen_prefix()
    if start and _feature_bytes(model, x, start) <= FEATURE_CACHE_BYTES:
        x = model.features(x, start)
        xv = model.features(xv, start) if len(yv) else xv
    else:
        start = 0

    trainable = model.trainable()
    state = AdamState.zeros_like([layer.params[key] for _, layer, key in trainable])
    sched = ReduceLROnPlateau(config.learning_rate, config.plateau_patience, config.plateau_factor, config.min_lr)
    curves = TrainingCurves()
    n = x.shape[0]
    targets = one_hot(y, model.num_classes)
    for epoch in range(config.epochs):
        lr = sched.lr
        order = np.random.default_rng([config.seed, epoch, 0]).permutation(n)
        loss_sum = 0.0
        correct = 0
        for b, (lo, hi) in enumerate(_batches(n, config.batch_size)):
            idx = order[lo:hi]
            drop_rng = np.random.default_rng([config.seed, epoch, b + 1])
            logits = model.forward(x[idx], training=True, rng=drop_rng, start=start)
            probs = softmax(logits)
            loss_sum += cce_loss(probs, targets[idx]) * idx.size
            correct += int(np.sum(np.argmax(probs, axis=1) == y[idx]))
            model.backward(cce_softmax_grad(probs, targets[idx]), input_grad=False)
            new_params, state = adam_step(
                [layer.params[key] for _, layer, key in trainable],
                [layer.grads[key] for _, layer, key in trainable],
                state,
                lr,
            )
            for (_, layer, key), value in zip(trainable, new_params):
                layer.params[key] = value
        val_loss, val_acc = evaluate_batch(model, xv, yv, start=start) if len(yv) else (float("nan"), float("nan"))
        curves.train_loss.append(loss_sum / n)
        curves.train_acc.append(correct / n)
        curves.val_loss.append(val_loss)
        curves.val_acc.append(val_acc)
        curves.lr.append(lr)
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f lr %.3g",
                 epoch + 1, loss_sum / n, correct / n, val_loss, val_acc, lr)
        sched.step(val_loss if len(yv) else loss_sum / n)
    return model, curves

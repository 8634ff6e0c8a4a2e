"""Confusion matrix and one-vs-rest accuracy, specificity, precision, recall, F1."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError

CLASS_NAMES = ("glioma", "meningioma", "no_tumor", "pituitary")
NUM_CLASSES = len(CLASS_NAMES)
METRIC_NAMES = ("accuracy", "specificity", "precision", "recall", "f1")


def confusion(predicted, actual, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Counts with rows = actual class, columns = predicted class."""
    p = np.asarray(predicted, dtype=np.int64).ravel()
    a = np.asarray(actual, dtype=np.int64).ravel()
    if p.size != a.size:
        raise ArgumentError(f"length mismatch: {p.size} predictions vs {a.size} labels")
    if p.size and (p.min() < 0 or a.min() < 0 or p.max() >= num_classes or a.max() >= num_classes):
        raise ArgumentError(f"labels must lie in 0..{num_classes - 1}")
    return np.bincount(a * num_classes + p, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    specificity: float
    precision: float
    recall: float
    f1: float
    zero_division: tuple[str, ...] = ()


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def per_class_metrics(cm, k: int) -> ClassMetrics:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ArgumentError("confusion matrix is empty")
    tp = int(cm[k, k])
    fp = int(cm[:, k].sum()) - tp
    fn = int(cm[k, :].sum()) - tp
    tn = total - tp - fp - fn
    flags: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", flags)
    recall = _ratio(tp, tp + fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    return ClassMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        accuracy=(tp + tn) / total,
        specificity=_ratio(tn, tn + fp, "specificity", flags),
        precision=precision,
        recall=recall,
        f1=f1,
        zero_division=tuple(flags),
    )


@dataclass(frozen=True)
class ClassReport:
    matrix: np.ndarray
    per_class: dict[str, ClassMetrics]
    macro: dict[str, float]
    overall_accuracy: float
    class_names: tuple[str, ...] = field(default=CLASS_NAMES)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", *METRIC_NAMES, "flag"])
        for name, m in self.per_class.items():
            writer.writerow([name, *(f"{getattr(m, k):.6f}" for k in METRIC_NAMES), "|".join(m.zero_division)])
        writer.writerow(["macro", *(f"{self.macro[k]:.6f}" for k in METRIC_NAMES), ""])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'class':<12}" + "".join(f"{k:>13}" for k in METRIC_NAMES) + f"{'support':>9}"
        lines = [head, "-" * len(head)]
        for i, (name, m) in enumerate(self.per_class.items()):
            row = f"{name:<12}" + "".join(f"{getattr(m, k):>13.4f}" for k in METRIC_NAMES)
            flag = " *" if m.zero_division else ""
            lines.append(row + f"{int(self.matrix[i].sum()):>9}" + flag)
        lines.append("-" * len(head))
        lines.append(f"{'macro avg':<12}" + "".join(f"{self.macro[k]:>13.4f}" for k in METRIC_NAMES))
        lines.append(f"overall accuracy {self.overall_accuracy:.4f} ({int(np.trace(self.matrix))}/{int(self.matrix.sum())})")
        if any(m.zero_division for m in self.per_class.values()):
            lines.append("* zero denominator; metric reported as 0")
        return "\n".join(lines) + "\n"


def report(cm, class_names=CLASS_NAMES) -> ClassReport:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.sum() == 0:
        raise ArgumentError("confusion matrix is empty")
    per_class = {name: per_class_metrics(cm, k) for k, name in enumerate(class_names)}
    macro = {k: float(np.mean([getattr(m, k) for m in per_class.values()])) for k in METRIC_NAMES}
    return ClassReport(
        matrix=cm,
        per_class=per_class,
        macro=macro,
        overall_accuracy=float(np.trace(cm)) / float(cm.sum()),
        class_names=tuple(class_names),
    )


def confusion_csv(cm, class_names=CLASS_NAMES) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["actual\\predicted", *class_names])
    for name, row in zip(class_names, np.asarray(cm)):
        writer.writerow([name, *(int(v) for v in row)])
    return buf.getvalue()


def parse_report_csv(text: str) -> dict[str, dict[str, float]]:
    rows = csv.DictReader(io.StringIO(text))
    return {r["class"]: {k: float(r[k]) for k in METRIC_NAMES} for r in rows}

"""Skull stripping: bimodality check, Otsu threshold, largest component, closing."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .crop import largest_component
from .errors import ArgumentError, DegenerateHistogramError
from .imgcore import as_image, as_mask, histogram256

log = logging.getLogger(__name__)

DEFAULT_CUTOFF = 0.6
DEFAULT_CLOSING_RADIUS = 5


@dataclass(frozen=True)
class BimodalityReport:
    is_bimodal: bool
    score: float
    threshold: int


def _as_counts(hist) -> list[int]:
    h = np.asarray(hist)
    if h.ndim != 1 or h.size < 2:
        raise ArgumentError("histogram must be a 1-D array with at least 2 bins")
    if np.any(h < 0):
        raise ArgumentError("histogram counts must be non-negative")
    return [int(v) for v in h]


def otsu_threshold(hist) -> int:
    """Bin ``t`` maximizing the between-class variance, foreground = bins > t.

    Ties resolve to the smallest ``t``. Comparisons are exact: with ``n0`` pixels
    and intensity sum ``s0`` at or below ``t`` (totals ``N``, ``S``), the
    between-class variance is ``(n0*S - N*s0)**2 / (n0 * n1 * N**2)``.
    """
    counts = _as_counts(hist)
    if sum(1 for c in counts if c) < 2:
        raise DegenerateHistogramError("histogram needs at least two populated bins")
    total = sum(counts)
    total_sum = sum(i * c for i, c in enumerate(counts))
    best_t = -1
    best_num, best_den = -1, 1
    n0 = s0 = 0
    for t, c in enumerate(counts[:-1]):
        n0 += c
        s0 += t * c
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n0 * total_sum - total * s0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def between_class_variance(hist, t: int) -> Fraction:
    counts = _as_counts(hist)
    total = sum(counts)
    n0 = sum(counts[: t + 1])
    n1 = total - n0
    if n0 == 0 or n1 == 0:
        return Fraction(0)
    mu0 = Fraction(sum(i * c for i, c in enumerate(counts[: t + 1])), n0)
    mu1 = Fraction(sum(i * c for i, c in enumerate(counts) if i > t), n1)
    return Fraction(n0, total) * Fraction(n1, total) * (mu0 - mu1) ** 2


def bimodality_check(hist, cutoff: float = DEFAULT_CUTOFF) -> BimodalityReport:
    """Score = Otsu between-class variance divided by total variance."""
    counts = _as_counts(hist)
    total = sum(counts)
    if total == 0:
        raise ArgumentError("histogram has zero mass")
    mean = Fraction(sum(i * c for i, c in enumerate(counts)), total)
    var = sum(c * (i - mean) ** 2 for i, c in enumerate(counts) if c) / total
    if var == 0:
        raise DegenerateHistogramError("histogram has zero variance")
    t = otsu_threshold(counts)
    score = float(between_class_variance(counts, t) / var)
    return BimodalityReport(is_bimodal=score >= cutoff, score=score, threshold=t)


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def _dilate(mask: np.ndarray, se: np.ndarray) -> np.ndarray:
    r = se.shape[0] // 2
    h, w = mask.shape
    padded = np.pad(mask, r)
    out = np.zeros_like(mask)
    for dy, dx in zip(*np.nonzero(se)):
        out |= padded[dy : dy + h, dx : dx + w]
    return out


def _erode(mask: np.ndarray, se: np.ndarray) -> np.ndarray:
    r = se.shape[0] // 2
    h, w = mask.shape
    padded = np.pad(mask, r, constant_values=True)
    out = np.ones_like(mask)
    for dy, dx in zip(*np.nonzero(se)):
        out &= padded[dy : dy + h, dx : dx + w]
    return out


def dilate(mask, radius: int) -> np.ndarray:
    return _dilate(as_mask(mask), disk(radius))


def erode(mask, radius: int) -> np.ndarray:
    return _erode(as_mask(mask), disk(radius))


def closing(mask, radius: int) -> np.ndarray:
    """Dilation then erosion by a disk, computed on a margin so the result is extensive."""
    m = as_mask(mask)
    if radius < 1:
        raise ArgumentError(f"closing radius must be >= 1, got {radius}")
    se = disk(radius)
    padded = np.pad(m, radius)
    closed = _erode(_dilate(padded, se), se)
    return closed[radius:-radius, radius:-radius]


def strip_skull(
    image,
    cutoff: float = DEFAULT_CUTOFF,
    closing_radius: int = DEFAULT_CLOSING_RADIUS,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(stripped, brain_mask)``; non-bimodal scans pass through with a full mask.

    ``closing_radius=0`` skips the closing step.
    """
    img = as_image(image)
    hist = histogram256(np.clip(img, 0.0, 1.0))
    try:
        report = bimodality_check(hist, cutoff)
    except DegenerateHistogramError:
        report = None
    if report is None or not report.is_bimodal:
        score = "n/a" if report is None else f"{report.score:.3f}"
        log.warning("strip: scan is not bimodal (score %s); left unmodified", score)
        return img.copy(), np.ones(img.shape, dtype=bool)
    fg = np.rint(np.clip(img, 0.0, 1.0) * 255) > report.threshold
    brain = largest_component(fg, 8)
    if closing_radius > 0:
        brain = closing(brain, closing_radius)
    return np.where(brain, img, 0.0), brain


def dice(a, b) -> float:
    a = as_mask(a)
    b = as_mask(b, like=a)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total

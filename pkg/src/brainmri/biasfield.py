"""N4-style multiplicative bias field estimation in the log-intensity domain.

Single resolution level; the field is regularized with a wide masked Gaussian
instead of a B-spline fit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .denoise.gaussian import gaussian_filter
from .errors import ArgumentError, DomainError
from .imgcore import as_image, as_mask

LOG_FLOOR = 1e-4
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class N4Params:
    max_iterations: int = 50
    convergence_threshold: float = 0.001
    histogram_bins: int = 200
    fwhm: float = 0.15
    wiener_noise: float = 0.01
    field_smoothing_sigma: float = 30.0

    def __post_init__(self):
        for name in ("max_iterations", "convergence_threshold", "fwhm", "wiener_noise", "field_smoothing_sigma"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        if self.histogram_bins < 32:
            raise ArgumentError("histogram_bins must be >= 32")


@dataclass(frozen=True)
class BiasField:
    """Additive log-domain bias; ``mask`` marks where it is applied."""

    log_field: np.ndarray
    mask: np.ndarray
    iterations: int = 0
    convergence: tuple[float, ...] = ()

    @property
    def multiplicative(self) -> np.ndarray:
        return np.exp(self.log_field)


def _gaussian_bins(n: int, sigma_bins: float) -> np.ndarray:
    """Circularly centred Gaussian of length ``n`` (index 0 is the peak)."""
    d = np.arange(n, dtype=np.float64)
    d = np.minimum(d, n - d)
    g = np.exp(-0.5 * (d / sigma_bins) ** 2) if sigma_bins > 0 else (d == 0).astype(np.float64)
    return g / g.sum()


def _padded_size(n: int) -> int:
    return 1 << (int(math.ceil(math.log2(n))) + 1)


def sharpen_histogram(hist, fwhm: float, wiener_noise: float, bin_width: float = 1.0) -> np.ndarray:
    """Wiener-deconvolve ``hist`` by a Gaussian of the given FWHM.

    ``fwhm`` is in the units of ``bin_width``. Negative lobes are clamped to zero
    and the result is rescaled to the input mass.
    """
    v = np.asarray(hist, dtype=np.float64)
    mass = v.sum()
    if not mass > 0:
        raise ArgumentError("histogram has zero mass")
    if np.count_nonzero(v) == 1:
        # A point mass is already as sharp as it gets; deconvolving it only adds ringing.
        return v.copy()
    n = v.size
    size = _padded_size(n)
    offset = (size - n) // 2
    padded = np.zeros(size)
    padded[offset : offset + n] = v
    f = np.fft.rfft(_gaussian_bins(size, fwhm / bin_width * _FWHM_TO_SIGMA))
    g = np.conj(f) / (np.abs(f) ** 2 + wiener_noise)
    u = np.fft.irfft(np.fft.rfft(padded) * g, size)[offset : offset + n]
    u = np.maximum(u, 0.0)
    total = u.sum()
    if total <= 0:
        return v.copy()
    return u * (mass / total)


def _splat(values: np.ndarray, lo: float, bw: float, bins: int) -> np.ndarray:
    pos = (values - lo) / bw
    i0 = np.clip(np.floor(pos).astype(np.intp), 0, bins - 2)
    frac = pos - i0
    hist = np.bincount(i0, weights=1.0 - frac, minlength=bins)
    hist += np.bincount(i0 + 1, weights=frac, minlength=bins)
    return hist


def _expectation_map(hist: np.ndarray, lo: float, bw: float, params: N4Params) -> np.ndarray:
    """E[true intensity | observed bin] for every bin centre."""
    bins = hist.size
    sharp = sharpen_histogram(hist, params.fwhm, params.wiener_noise, bin_width=bw)
    centres = lo + bw * np.arange(bins)
    size = _padded_size(bins)
    kern = np.fft.rfft(_gaussian_bins(size, params.fwhm / bw * _FWHM_TO_SIGMA))

    def smooth(x):
        padded = np.zeros(size)
        padded[:bins] = x
        return np.fft.irfft(np.fft.rfft(padded) * kern, size)[:bins]

    num = smooth(sharp * centres)
    den = smooth(sharp)
    out = centres.copy()
    ok = np.abs(den) > 1e-12 * max(den.max(), 1e-300)
    out[ok] = num[ok] / den[ok]
    return out


def _masked_smooth(values: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    weight = gaussian_filter(mask.astype(np.float64), sigma)
    smooth = gaussian_filter(np.where(mask, values, 0.0), sigma)
    return smooth / np.maximum(weight, 1e-12)


def estimate_bias_n4(image, mask, params: N4Params = N4Params()) -> BiasField:
    """Estimate a smooth log-domain field such that ``image = true * exp(field)``.

    The field is kept zero-mean inside the mask, so it only models relative
    non-uniformity; a global gain is left in the image.
    """
    img = as_image(image)
    m = as_mask(mask, like=img)
    if not m.any():
        raise ArgumentError("bias estimation mask is empty")
    if np.any(img[m] <= 0):
        raise DomainError("image must be strictly positive inside the mask")
    log_img = np.log(np.maximum(img, LOG_FLOOR))
    field = np.zeros_like(img)
    bins = params.histogram_bins
    history: list[float] = []
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        resid = log_img[m] - field[m]
        lo, hi = float(resid.min()), float(resid.max())
        if hi - lo < 1e-9:
            iterations -= 1
            break
        bw = (hi - lo) / (bins - 1)
        expect = _expectation_map(_splat(resid, lo, bw, bins), lo, bw, params)
        sharpened = np.interp(resid, lo + bw * np.arange(bins), expect)
        diff = np.zeros_like(img)
        diff[m] = resid - sharpened
        update = _masked_smooth(diff, m, params.field_smoothing_sigma)
        update -= update[m].mean()
        field = field + update
        ratio = np.exp(update[m])
        cv = float(ratio.std() / ratio.mean())
        history.append(cv)
        if cv < params.convergence_threshold:
            break
    return BiasField(log_field=field, mask=m, iterations=iterations, convergence=tuple(history))


def correct_bias(image, field: BiasField, normalize: bool = True) -> np.ndarray:
    """Divide out the field inside its mask.

    With ``normalize`` the result is clamped to [0, 1.5] and scaled so its
    maximum is 1.
    """
    img = as_image(image)
    if img.shape != field.log_field.shape:
        raise ArgumentError(f"dimension mismatch {img.shape} vs {field.log_field.shape}")
    out = img.copy()
    m = field.mask
    out[m] = np.exp(np.log(np.maximum(img[m], LOG_FLOOR)) - field.log_field[m])
    if not normalize:
        return out
    out = np.clip(out, 0.0, 1.5)
    peak = out.max()
    return out / peak if peak > 0 else out


def otsu_foreground(image) -> np.ndarray:
    """Foreground mask for bias estimation when no brain mask is available."""
    from .imgcore import histogram256
    from .skullstrip import otsu_threshold

    img = np.clip(as_image(image), 0.0, 1.0)
    hist = histogram256(img)
    if np.count_nonzero(hist) < 2:
        return img > 0
    t = otsu_threshold(hist)
    return (np.rint(img * 255) > t) & (img > 0)

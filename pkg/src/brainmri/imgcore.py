"""Image representation, PGM I/O and shared raster primitives.

Images are 2-D ``float64`` numpy arrays indexed ``[y, x]`` with nominal
intensities in ``[0, 1]``; masks are 2-D ``bool`` arrays of the same shape.
"""
from __future__ import annotations

import math
import os
import re

import numpy as np

from .errors import (
    ArgumentError,
    MalformedHeaderError,
    RangeError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)

NETWORK_SIZE = 150
REC601 = (0.299, 0.587, 0.114)

_RANGE_TOL = 1e-12


def as_image(data, copy: bool = False) -> np.ndarray:
    """Validate and convert ``data`` to a 2-D float64 image."""
    img = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ArgumentError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ArgumentError(f"image must be at least 1x1, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ArgumentError("image contains non-finite intensities")
    return img


def as_mask(data, like: np.ndarray | None = None) -> np.ndarray:
    mask = np.asarray(data, dtype=bool)
    if mask.ndim != 2:
        raise ArgumentError(f"mask must be 2-D, got shape {mask.shape}")
    if like is not None and mask.shape != like.shape:
        raise ArgumentError(f"mask shape {mask.shape} does not match image shape {like.shape}")
    return mask


def check_unit_range(img: np.ndarray) -> None:
    if img.size and (img.min() < -_RANGE_TOL or img.max() > 1.0 + _RANGE_TOL):
        raise RangeError(f"intensities must lie in [0, 1], got [{img.min():.6g}, {img.max():.6g}]")


def to_grayscale(rgb) -> np.ndarray:
    """Convert an ``(H, W, 3)`` array to luminance with Rec.601 weights."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ArgumentError(f"expected (H, W, 3) array, got {arr.shape}")
    return arr[..., 0] * REC601[0] + arr[..., 1] * REC601[1] + arr[..., 2] * REC601[2]


# ---------------------------------------------------------------- PGM I/O

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(buf: bytes) -> tuple[int, int, int, int]:
    if len(buf) < 2 or buf[:2] not in (b"P5", b"P2"):
        raise UnsupportedFormatError(f"unsupported magic {buf[:2]!r}; expected binary PGM (P5)")
    if buf[:2] == b"P2":
        raise UnsupportedFormatError("ASCII PGM (P2) is not supported; expected P5")
    pos = 2
    values = []
    for _ in range(3):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise MalformedHeaderError("PGM header ended early")
        tok = m.group(1)
        if not tok.isdigit():
            raise MalformedHeaderError(f"non-numeric PGM header field {tok!r}")
        values.append(int(tok))
        pos = m.end()
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeaderError("missing whitespace after maxval")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeaderError(f"invalid maxval {maxval}")
    return width, height, maxval, pos + 1


def load_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM file, scaling samples by maxval into [0, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    width, height, maxval, offset = _read_header(buf)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = buf[offset : offset + need]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{os.fspath(path)}: header declares {width}x{height} samples "
            f"({need} bytes) but only {len(payload)} bytes follow"
        )
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return samples.astype(np.float64) / maxval


def save_pgm(image, path, depth: int = 8) -> None:
    """Write ``image`` as P5 with nearest-integer quantization to 8 or 16 bits."""
    img = as_image(image)
    check_unit_range(img)
    if depth not in (8, 16):
        raise ArgumentError(f"depth must be 8 or 16, got {depth}")
    maxval = 255 if depth == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    data = q.astype(">u2" if depth == 16 else "u1").tobytes()
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(data)


def load_image(path) -> np.ndarray:
    """Load PGM natively; other raster formats go through Pillow when installed."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return load_pgm(path)
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise UnsupportedFormatError(f"{path}: not a P5 PGM and Pillow is not installed") from exc
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return to_grayscale(arr)


# ---------------------------------------------------------------- primitives


def resize_bilinear(image, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resize: output pixel i samples input i*(in-1)/(out-1)."""
    img = as_image(image)
    if out_w < 1 or out_h < 1:
        raise ArgumentError(f"output size must be >= 1, got {out_w}x{out_h}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = _corner_coords(h, out_h)
    xs = _corner_coords(w, out_w)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _corner_coords(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def _pad(img: np.ndarray, ph: int, pw: int, border: str) -> np.ndarray:
    if border == "reflect":
        # Edge sample repeated (half-sample symmetric); np.pad handles pads wider than the image.
        return np.pad(img, ((ph, ph), (pw, pw)), mode="symmetric")
    if border == "zero":
        return np.pad(img, ((ph, ph), (pw, pw)), mode="constant")
    raise ArgumentError(f"unknown border policy {border!r}")


def convolve2d(image, kernel, border: str = "reflect") -> np.ndarray:
    """Same-size 2-D convolution (kernel flipped) with an odd-sized kernel."""
    img = as_image(image)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ArgumentError(f"kernel dimensions must be odd, got {k.shape}")
    kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    padded = _pad(img, ph, pw, border)
    h, w = img.shape
    out = np.zeros_like(img)
    flipped = k[::-1, ::-1]
    for i in range(kh):
        for j in range(kw):
            wgt = flipped[i, j]
            if wgt != 0.0:
                out += wgt * padded[i : i + h, j : j + w]
    return out


def convolve1d(image, kernel, axis: int, border: str = "reflect") -> np.ndarray:
    """Convolve along one axis with an odd-length 1-D kernel."""
    k = np.asarray(kernel, dtype=np.float64).ravel()
    if axis == 0:
        return convolve2d(image, k[:, None], border)
    return convolve2d(image, k[None, :], border)


def histogram256(image) -> np.ndarray:
    """Counts of ``round(v * 255)`` over the 256 possible bins."""
    img = as_image(image)
    check_unit_range(img)
    bins = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.intp)
    return np.bincount(bins.ravel(), minlength=256).astype(np.int64)


def psnr(reference, test) -> float:
    """PSNR in dB with peak 1.0; identical images give ``math.inf``."""
    a = as_image(reference)
    b = as_image(test)
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)

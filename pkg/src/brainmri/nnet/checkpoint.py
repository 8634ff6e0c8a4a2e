"""Versioned binary checkpoints with a trailing SHA-256.

Layout (little-endian)::

    b"BMRICKPT" | u32 version | u32 len | arch JSON | u32 backbone_len | u32 n_entries
    n_entries x ( u16 name_len | name | u8 frozen | u8 ndim | ndim x u32 dims | f8 data )
    32-byte sha256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..errors import CorruptCheckpointError
from .model import Model, model_from_arch

MAGIC = b"BMRICKPT"
VERSION = 1


def save_checkpoint(model: Model, path) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    arch = json.dumps(model.arch, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(arch)), arch, struct.pack("<I", model.backbone_len)]
    entries = []
    for i, layer in enumerate(model.layers):
        for key in sorted(layer.params):
            entries.append((f"{i}.{layer.kind}.param.{key}", layer.frozen, layer.params[key]))
        for key in sorted(layer.buffers):
            entries.append((f"{i}.{layer.kind}.buffer.{key}", layer.frozen, layer.buffers[key]))
    parts.append(struct.pack("<I", len(entries)))
    for name, frozen, arr in entries:
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<BB", int(frozen), arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 + 32 or not data.startswith(MAGIC):
        raise CorruptCheckpointError("not a checkpoint file (bad magic or truncated)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError("checksum mismatch")
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
    (alen,) = r.unpack("<I")
    arch = json.loads(r.take(alen).decode("utf-8"))
    (backbone_len,) = r.unpack("<I")
    model = model_from_arch(arch)
    if backbone_len != model.backbone_len:
        raise CorruptCheckpointError("backbone split does not match architecture")
    (count,) = r.unpack("<I")
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        frozen, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        idx, kind, section, key = name.split(".")
        layer = model.layers[int(idx)]
        if layer.kind != kind:
            raise CorruptCheckpointError(f"layer {idx} is {layer.kind}, checkpoint says {kind}")
        store = layer.params if section == "param" else layer.buffers
        if key not in store or store[key].shape != arr.shape:
            raise CorruptCheckpointError(f"unexpected entry {name} with shape {arr.shape}")
        store[key] = arr
        layer.frozen = bool(frozen)
    if r.pos != len(body):
        raise CorruptCheckpointError("trailing data in checkpoint")
    return model

"""Versioned binary parameter checkpoints.

Layout (little endian): magic ``AOPTNN01``, u32 version, u32 entry count, then
per parameter tensor: u8 kind tag, u8 ndim, ndim x u32 shape, raw f8 values.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ConfigurationError

MAGIC = b"AOPTNN01"
VERSION = 1
KINDS = ("bn_scale", "bn_shift", "conv_w", "conv_b", "dense_w", "dense_b")


def save_checkpoint(module, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(module.params)))
        for p, kind in zip(module.params, module.kinds):
            fh.write(struct.pack("<BB", KINDS.index(kind), p.value.ndim))
            fh.write(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return the list of ``(kind, array)`` entries stored in ``path``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ConfigurationError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    out = []
    try:
        for _ in range(count):
            tag, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            n = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
            out.append((KINDS[tag], arr))
    except (struct.error, ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: truncated or corrupt checkpoint") from exc
    if off != len(data):
        raise ConfigurationError(f"{path}: {len(data) - off} trailing bytes")
    return out


def load_checkpoint(module, path):
    entries = read_checkpoint(path)
    if len(entries) != len(module.params):
        raise ConfigurationError(
            f"{path}: {len(entries)} tensors but the model has {len(module.params)}"
        )
    for (kind, arr), p, pk in zip(entries, module.params, module.kinds):
        if kind != pk or arr.shape != p.value.shape:
            raise ConfigurationError(f"{path}: tensor {p.name} does not match ({kind} {arr.shape})")
    for (_, arr), p in zip(entries, module.params):
        p.value = arr.copy()
    return module

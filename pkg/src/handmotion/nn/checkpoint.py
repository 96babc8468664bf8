"""HMDL binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"HMDL"
    version u32
    n_cfg   u32
    n_cfg * (u16 key-length, key utf-8, u32 value-length, value utf-8)
    n_tensors u32
    n_tensors * (u16 name-length, name utf-8, u32 rank, rank * u32 dims,
                 float32 little-endian data, row-major)

Round-trips are bit-exact at 32-bit precision.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"HMDL"
VERSION = 1


def save_checkpoint(path, config: dict[str, str], tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(config))]
    for key, value in config.items():
        kb = key.encode("utf-8")
        vb = str(value).encode("utf-8")
        parts.append(struct.pack("<H", len(kb)))
        parts.append(kb)
        parts.append(struct.pack("<I", len(vb)))
        parts.append(vb)
    parts.append(struct.pack("<I", len(tensors)))
    for name, array in tensors.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", array.ndim))
        for dim in array.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError("truncated HMDL checkpoint")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise DataError(f"{path}: not an HMDL checkpoint")
    version = reader.u32()
    if version != VERSION:
        raise DataError(f"{path}: unsupported HMDL version {version}")
    config: dict[str, str] = {}
    for _ in range(reader.u32()):
        key = reader.take(reader.u16()).decode("utf-8")
        value = reader.take(reader.u32()).decode("utf-8")
        config[key] = value
    tensors: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u16()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float32)
    return config, tensors

"""Versioned binary container for trained models ("RIEM").

Layout, all little-endian:
  magic "RIEM" | u32 version | kind tag | dimension tag |
  feature-name table (u32 count, then length-prefixed utf-8 names) |
  payload (u32 count, then per item: length-prefixed name, u8 dtype code,
  u8 ndim, u32 dims..., raw bytes)

Tags are length-prefixed utf-8 strings.  Payload items are numpy arrays;
scalars travel as 0-d float64 arrays.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, TruncatedFile, VersionMismatch

MODEL_MAGIC = b"RIEM"
MODEL_VERSION = 1

_DTYPES = {0: "<f8", 1: "<i4", 2: "<f4", 3: "<i8"}
_CODES = {np.dtype("float64"): 0, np.dtype("int32"): 1, np.dtype("float32"): 2, np.dtype("int64"): 3}


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


class _Reader:
    def __init__(self, raw: bytes, name: str):
        self.raw = raw
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise TruncatedFile(f"{self.name}: ran out of bytes")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def save_model(path, kind: str, dimension: str, feature_names, arrays: dict) -> None:
    out = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION), _pack_str(kind), _pack_str(dimension)]
    names = tuple(feature_names)
    out.append(struct.pack("<I", len(names)))
    out.extend(_pack_str(n) for n in names)
    out.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            arr = arr.astype(np.float64)
        out.append(_pack_str(name))
        out.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_model(path):
    """Returns (kind, dimension, feature_names, arrays)."""
    raw = Path(path).read_bytes()
    r = _Reader(raw, str(path))
    if r.take(4) != MODEL_MAGIC:
        raise BadMagic(f"{path}: not a RIEM container")
    version = r.u32()
    if version != MODEL_VERSION:
        raise VersionMismatch(f"{path}: version {version}")
    kind = r.string()
    dimension = r.string()
    feature_names = tuple(r.string() for _ in range(r.u32()))
    arrays = {}
    for _ in range(r.u32()):
        name = r.string()
        code, ndim = r.u8(), r.u8()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        dtype = np.dtype(_DTYPES[code])
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(count * dtype.itemsize), dtype=dtype)
        arrays[name] = data.reshape(shape).copy()
    return kind, dimension, feature_names, arrays

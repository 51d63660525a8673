"""FRWT binary container for named float64 arrays.

Layout (little-endian)::

    b"FRWT" | u32 version | u32 count
    count x ( u16 name_len | name utf-8 | u8 rank | rank x u32 extent | float64 payload )

Entries are written in lexicographic name order so identical parameters
always serialise to identical bytes.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from ..errors import FormatError

MAGIC = b"FRWT"
VERSION = 1


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"entry name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated FRWT payload at byte {pos} (need {n} more)")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise FormatError("not an FRWT file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported FRWT version {version}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        if name in arrays:
            raise FormatError(f"duplicate FRWT entry {name!r}")
        arrays[name] = data
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after FRWT entries")
    return arrays


def save_weights(arrays: dict[str, np.ndarray], path: Union[str, Path, BinaryIO]) -> None:
    payload = dumps(arrays)
    if hasattr(path, "write"):
        path.write(payload)
    else:
        Path(path).write_bytes(payload)


def load_weights(path: Union[str, Path, BinaryIO]) -> dict[str, np.ndarray]:
    if hasattr(path, "read"):
        return loads(path.read())
    return loads(Path(path).read_bytes())

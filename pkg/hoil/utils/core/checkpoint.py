"""
Flat binary parameter store.

Layout: magic "HOILCKPT", version u32, entry count u32, then per entry the
name length u32, the UTF-8 name, rank u32, rank dims u32 and the
little-endian float64 payload. Entries keep insertion order.
"""
import os
import struct
from typing import Dict, Mapping

import numpy as np

from hoil.utils.core.errors import DataError

MAGIC = b"HOILCKPT"
VERSION = 1


def save_checkpoint(path: str, entries: Mapping[str, np.ndarray]):
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, value in entries.items():
        array = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array).tobytes())
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise DataError(f"{path} is not a HOILCKPT checkpoint")
    try:
        version, count = struct.unpack_from("<II", blob, 8)
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        offset = 16
        entries: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            entries[name] = data.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as e:
        raise DataError(f"truncated checkpoint {path}: {e}")
    if offset != len(blob):
        raise DataError(f"trailing bytes in checkpoint {path}")
    return entries

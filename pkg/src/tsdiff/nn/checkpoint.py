"""Binary checkpoint format for named tensors.

Layout (little-endian): magic "TSDF", format version u32, tensor count u32,
then per tensor: name length u32, UTF-8 name, rank u32, dims u32[rank], raw
float32 payload. A CRC32 of everything before it closes the file.
"""

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"TSDF"
VERSION = 1


def serialize(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        payload = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", payload.ndim))
        parts.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
        parts.append(payload.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def deserialize(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError("bad magic bytes")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("CRC mismatch")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", body, offset)
            offset += 4
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", body, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", body, offset)
            offset += 4 * rank
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(body, dtype="<f4", count=n, offset=offset).reshape(dims)
            offset += 4 * n
            tensors[name] = arr.copy()
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated or corrupt tensor table: {exc}") from None
    if offset != len(body):
        raise CheckpointError("trailing bytes after tensor table")
    return tensors


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> str:
    """Write tensors to ``path``; returns the SHA-256 of the file bytes."""
    blob = serialize(tensors)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return deserialize(blob)


def checkpoint_hash(tensors: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(serialize(tensors)).hexdigest()

"""Seed-tuple checkpoints.

Byte layout (all integers little-endian)::

    offset  size        field
    0       4           magic b"SUBT"
    4       4           u32 version word: low 16 bits format version (1),
                        high 16 bits RNG scheme id (1)
    8       2           u16 descriptor length n
    10      n           architecture descriptor, UTF-8
    10+n    1           projection kind (0 dense, 1 sparse, 2 fastfood)
    11+n    8           u64 D
    19+n    8           u64 d
    27+n    8           u64 seed for theta0
    35+n    8           u64 seed for P
    43+n    4*d         theta_d as float32
    43+n+4d 4           u32 CRC-32 of every preceding byte

Total size: ``4 + 4 + (2 + n) + 1 + 8 * 4 + 4 * d + 4`` bytes.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from . import rng
from .projection import ProjectionKind
from .subspace import SubspaceModel, init_subspace_model

MAGIC = b"SUBT"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<BQQQQ")


class CheckpointError(ValueError):
    pass


def encoded_size(descriptor: str, d: int) -> int:
    return 4 + 4 + (2 + len(descriptor.encode())) + 1 + 8 * 4 + 4 * d + 4


def encode(sm: SubspaceModel) -> bytes:
    desc = sm.descriptor.encode()
    if sm.d < 1:
        raise CheckpointError("d must be positive")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION | (rng.SCHEME_ID << 16)),
        struct.pack("<H", len(desc)), desc,
        _HEAD.pack(int(sm.projection.kind), sm.D, sm.d, sm.seed_theta0 & rng.MASK64,
                   sm.seed_P & rng.MASK64),
        np.asarray(sm.theta_d, dtype="<f4").tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_compressed(sm: SubspaceModel, path) -> int:
    """Write ``sm`` as a seed-tuple checkpoint; returns the byte count."""
    data = encode(sm)
    Path(path).write_bytes(data)
    return len(data)


def decode(data: bytes) -> SubspaceModel:
    from .tasks import resolve_descriptor
    if len(data) < 4 + 4 + 2 + 1 + 32 + 4 or data[:4] != MAGIC:
        raise CheckpointError("bad magic or truncated checkpoint")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checksum mismatch")
    (version,) = struct.unpack("<I", data[4:8])
    if version & 0xFFFF != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version & 0xFFFF}")
    if version >> 16 != rng.SCHEME_ID:
        raise CheckpointError(f"unsupported RNG scheme {version >> 16}")
    (n,) = struct.unpack("<H", data[8:10])
    desc = data[10:10 + n].decode()
    kind, D, d, seed_theta0, seed_P = _HEAD.unpack_from(data, 10 + n)
    try:
        kind = ProjectionKind(kind)
    except ValueError:
        raise CheckpointError(f"unknown projection kind {kind}") from None
    start = 10 + n + _HEAD.size
    if len(data) != start + 4 * d + 4:
        raise CheckpointError("payload length does not match d")
    try:
        arch = resolve_descriptor(desc)
    except ValueError as exc:
        raise CheckpointError(f"bad descriptor {desc!r}: {exc}") from None
    if arch.param_count() != D:
        raise CheckpointError(f"descriptor {desc!r} has D={arch.param_count()}, file says {D}")
    sm = init_subspace_model(arch, kind, d, seed_theta0, seed_P)
    sm.theta_d = np.frombuffer(data, dtype="<f4", count=d, offset=start).astype(np.float64)
    return sm


def load_compressed(path) -> SubspaceModel:
    return decode(Path(path).read_bytes())


def compression_summary(sm: SubspaceModel) -> dict:
    """Checkpoint size against storing all D parameters as float32."""
    size = encoded_size(sm.descriptor, sm.d)
    direct = 4 * sm.D
    return {"checkpoint_bytes": size, "direct_bytes": direct, "ratio": direct / size}

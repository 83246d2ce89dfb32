"""Binary checkpoint container.

Layout (little-endian)::

    magic      8 bytes  b"SRCKPT\\x00\\x01"
    version    uint32
    cfg_len    uint32, then cfg_len bytes of UTF-8 JSON (config echo)
    n_tensors  uint32
    per tensor:
        name_len uint16, name (UTF-8)
        ndim     uint8, dims uint32[ndim]
        data     float32[prod(dims)]
"""
from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"SRCKPT\x00\x01"
VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def encode(tensors: dict, config: dict) -> bytes:
    cfg = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise CheckpointError(f"tensor {name!r} has dtype {arr.dtype}; checkpoints hold float32 only")
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(data: bytes):
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        version, cfg_len = struct.unpack_from("<II", data, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 16
        config = json.loads(data[pos:pos + cfg_len].decode())
        pos += cfg_len
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(n):
            (nl,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nl].decode()
            pos += nl
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * count > len(data):
                raise CheckpointError(f"tensor {name!r} truncated")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return tensors, config


def save_checkpoint(path, tensors: dict, config: dict) -> str:
    """Write atomically; returns the SHA-256 of the written bytes."""
    data = encode(tensors, config)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path):
    """Returns (tensors, config, sha256)."""
    if not os.path.isfile(path):
        raise CheckpointError(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    tensors, config = decode(data)
    return tensors, config, hashlib.sha256(data).hexdigest()

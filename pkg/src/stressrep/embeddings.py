"""Embedding matrix file.

Layout (little-endian)::

    magic     8 bytes  b"SREMBED\\x01"
    version   uint32
    rows      uint32
    cols      uint32
    source    64 bytes ASCII (checkpoint SHA-256 hex, space padded)
    per row:  uint16 id length, UTF-8 id, float32[cols]
"""
from __future__ import annotations

import struct

import numpy as np

from .checkpoint import atomic_write_bytes
from .errors import DataError

MAGIC = b"SREMBED\x01"
VERSION = 1


def write_embeddings(path, ids, matrix, source_id: str = "") -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise DataError(f"embedding matrix shape {matrix.shape} does not match {len(ids)} ids")
    src = source_id.encode("ascii")[:64].ljust(64, b" ")
    parts = [MAGIC, struct.pack("<III", VERSION, matrix.shape[0], matrix.shape[1]), src]
    for uid, row in zip(ids, matrix):
        b = uid.encode()
        parts.append(struct.pack("<H", len(b)) + b + row.tobytes())
    atomic_write_bytes(path, b"".join(parts))


def is_embedding_file(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(8) == MAGIC


def read_embeddings(path):
    """Returns (ids, float32 matrix, source id)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not an embedding file")
    try:
        version, rows, cols = struct.unpack_from("<III", data, 8)
        if version != VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        source = data[20:84].decode("ascii").rstrip(" ")
        pos = 84
        ids = []
        mat = np.empty((rows, cols), dtype=np.float32)
        for i in range(rows):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            ids.append(data[pos:pos + n].decode())
            pos += n
            if pos + 4 * cols > len(data):
                raise DataError(f"{path}: truncated at row {i}")
            mat[i] = np.frombuffer(data, dtype="<f4", count=cols, offset=pos)
            pos += 4 * cols
    except struct.error as exc:
        raise DataError(f"{path}: corrupt embedding file ({exc})") from exc
    return ids, mat, source

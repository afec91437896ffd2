"""Dense matrix helpers and the SPMX binary matrix format.

SPMX layout (little endian)::

    b"SPMX" | u8 tag (0 = fp32, 1 = fp64) | u64 rows | u64 cols | row-major payload
"""
from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"SPMX"
_HEADER = struct.Struct("<4sBQQ")
_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class SpmxError(ValueError):
    pass


def as_f32_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate a finite 2-D fp32 matrix; reject non-finite entries by index."""
    m = np.asarray(a)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.dtype != np.float32:
        m = m.astype(np.float32)
    bad = ~np.isfinite(m)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"{name} has non-finite entry {m[i, j]} at index ({i}, {j})")
    return m


def write_spmx(fh: BinaryIO, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim != 2:
        raise SpmxError(f"SPMX holds 2-D matrices, got shape {a.shape}")
    if a.dtype == np.float32:
        tag = 0
    elif a.dtype == np.float64:
        tag = 1
    else:
        raise SpmxError(f"unsupported element type {a.dtype}")
    rows, cols = a.shape
    fh.write(_HEADER.pack(MAGIC, tag, rows, cols))
    fh.write(np.ascontiguousarray(a, dtype=_TAGS[tag]).tobytes())


def read_spmx(fh: BinaryIO) -> np.ndarray:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise SpmxError("truncated SPMX header")
    magic, tag, rows, cols = _HEADER.unpack(head)
    if magic != MAGIC:
        raise SpmxError(f"bad magic {magic!r}")
    if tag not in _TAGS:
        raise SpmxError(f"unknown element tag {tag}")
    dtype = _TAGS[tag]
    nbytes = rows * cols * dtype.itemsize
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise SpmxError(f"truncated payload: expected {nbytes} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=dtype).astype(dtype.newbyteorder("=")).reshape(rows, cols)


def dumps(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_spmx(buf, a)
    return buf.getvalue()


def loads(data: bytes) -> np.ndarray:
    return read_spmx(io.BytesIO(data))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path: str | os.PathLike, a: np.ndarray) -> None:
    atomic_write_bytes(path, dumps(a))


def load(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_spmx(fh)

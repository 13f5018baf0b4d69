"""Versioned binary container for named float64 arrays plus JSON metadata.

Layout (little endian)::

    magic   b"IBDC"
    uint16  format version
    4 bytes kind tag, e.g. b"ANN " or b"GMM "
    uint32  number of arrays
    per array: uint16 name length, utf-8 name, uint8 ndim,
               ndim x uint32 shape, row-major float64 data
    uint32  metadata length, utf-8 JSON metadata

Arrays round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .exceptions import CheckpointError

MAGIC = b"IBDC"
VERSION = 1


def dumps(kind: bytes, arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    if len(kind) != 4:
        raise ValueError("kind tag must be 4 bytes")
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<H", VERSION) + kind + struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(a.tobytes())
    mb = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(mb)) + mb)
    return buf.getvalue()


def loads(blob: bytes, kind: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated container")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    tag = bytes(take(4))
    if tag != kind:
        raise CheckpointError(f"expected {kind!r} container, found {tag!r}")
    (n,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(n):
        (ln,) = struct.unpack("<H", take(2))
        name = bytes(take(ln)).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(bytes(take(8 * count)), dtype="<f8").reshape(shape).astype(np.float64)
    (ml,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(ml)).decode())
    if pos != len(view):
        raise CheckpointError("trailing bytes after metadata")
    return arrays, meta


def digest(arrays: dict[str, np.ndarray]) -> str:
    """Content hash of the arrays (names, shapes and bytes), hex, 16 chars."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        h.update(name.encode() + repr(a.shape).encode() + a.tobytes())
    return h.hexdigest()[:16]

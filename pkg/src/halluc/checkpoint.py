"""Versioned binary container for parameters and run state.

Layout (all integers little-endian):

    magic "FHCKPT01" | u32 version | u32 meta_len | meta JSON (utf-8)
    u32 n_blocks
    per block: u16 name_len | name utf-8 | u8 ndim | u32 dims[ndim]
               | raw little-endian float32 data
    sha256 digest of everything above (32 bytes)

Blocks round-trip bit-exactly; truncation or bit flips fail the digest
check. The same container backs training checkpoints and feature-extractor
weight files (distinguished by ``meta["kind"]``).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import IntegrityError

MAGIC = b"FHCKPT01"
VERSION = 1
_DIGEST_LEN = 32


def write_container(path, meta: dict, blocks: dict) -> Path:
    """Write meta plus named float32 blocks; block order is sorted by name."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(blocks)))
    for name in sorted(blocks):
        # np.asarray (not ascontiguousarray) so 0-dim shapes survive;
        # tobytes() serializes in C order either way.
        arr = np.asarray(blocks[name], dtype="<f4")
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(digest)
    return path


def read_container(path):
    """Read (meta, blocks); raises IntegrityError on any corruption."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 + 4 + _DIGEST_LEN:
        raise IntegrityError(f"{path}: file too short to be a checkpoint")
    payload, digest = raw[:-_DIGEST_LEN], raw[-_DIGEST_LEN:]
    if hashlib.sha256(payload).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch (corrupt or truncated)")
    if payload[: len(MAGIC)] != MAGIC:
        raise IntegrityError(f"{path}: bad magic, not a checkpoint file")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, payload, off)
        off += size
        return vals if len(vals) > 1 else vals[0]

    version = take("<I")
    if version != VERSION:
        raise IntegrityError(f"{path}: unsupported container version {version}")
    meta_len = take("<I")
    try:
        meta = json.loads(payload[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: corrupt metadata ({exc})") from exc
    off += meta_len

    blocks = {}
    n_blocks = take("<I")
    for _ in range(n_blocks):
        name_len = take("<H")
        name = payload[off : off + name_len].decode("utf-8")
        off += name_len
        ndim = take("<B")
        shape = tuple(struct.unpack_from(f"<{ndim}I", payload, off))
        off += 4 * ndim
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off).reshape(shape)
        blocks[name] = arr.copy()
        off += count * 4
    if off != len(payload):
        raise IntegrityError(f"{path}: trailing bytes after last block")
    return meta, blocks

"""Versioned binary container used for bases and trained models.

Layout (all integers little-endian)::

    magic    6 bytes   b"FDBLR\\0"
    version  uint16
    hlen     uint32    length of the JSON header in bytes
    header   hlen bytes, UTF-8 JSON: {"kind", "meta", "arrays": [{"name", "shape"}]}
    payload  float64 '<f8' arrays, concatenated in header order, C order

The header is written with sorted keys so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"FDBLR\x00"
VERSION = 1
_PREFIX = struct.Struct("<6sHI")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps(kind: str, arrays: dict, meta: dict | None = None) -> bytes:
    entries = []
    payload = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape)})
        payload.append(a.tobytes(order="C"))
    header = json.dumps(
        {"kind": kind, "meta": meta or {}, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(payload)


def loads(data: bytes, kind: str | None = None) -> tuple[dict, dict]:
    if len(data) < _PREFIX.size:
        raise FormatError("file too short")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic bytes")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    if kind is not None and header.get("kind") != kind:
        raise FormatError(f"expected a {kind!r} file, found {header.get('kind')!r}")
    offset = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise FormatError(f"truncated payload for array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError("trailing bytes after payload")
    return arrays, header["meta"]


def save(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    atomic_write_bytes(path, dumps(kind, arrays, meta))


def load(path, kind: str | None = None) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes(), kind)

"""Versioned binary container shared by all model files.

Layout::

    magic        6 bytes ASCII (e.g. b"HFCNN1")
    version      uint32 little-endian
    header_len   uint32 little-endian
    header       UTF-8 JSON, with "blocks": [{"name", "shape"}, ...]
    payload      float64 little-endian, blocks concatenated in header order
"""
import json
import struct

import numpy as np

from harfuse.errors import FormatError, InputFileError

FORMAT_VERSION = 1
_PREFIX = struct.Struct("<6sII")


def write_container(path, magic, header, blocks):
    """Write ``blocks`` (sequence of (name, array)) under ``header`` to ``path``."""
    magic = magic.encode("ascii") if isinstance(magic, str) else magic
    if len(magic) != 6:
        raise ValueError("magic must be 6 bytes")
    meta = dict(header)
    meta["blocks"] = [{"name": name, "shape": list(np.shape(arr))} for name, arr in blocks]
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic):
    """Return (header, {name: array}). Raises FormatError on any mismatch."""
    magic = magic.encode("ascii") if isinstance(magic, str) else magic
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputFileError(path, f"cannot read model file ({exc.strerror})") from exc
    if len(data) < _PREFIX.size:
        raise FormatError(f"{path}: truncated container ({len(data)} bytes)")
    got, version, hlen = _PREFIX.unpack_from(data)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version > FORMAT_VERSION:
        raise FormatError(
            f"{path}: container format version {version} is newer than the "
            f"supported version {FORMAT_VERSION}"
        )
    if version < 1:
        raise FormatError(f"{path}: invalid container format version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc
    offset = start + hlen
    arrays = {}
    for block in header.get("blocks", []):
        shape = tuple(block["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if len(data) < offset + nbytes:
            raise FormatError(f"{path}: truncated payload in block {block['name']!r}")
        arrays[block["name"]] = (
            np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        )
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return header, arrays

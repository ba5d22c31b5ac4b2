"""Binary container for named float arrays.

Layout: magic bytes, a uint64 little-endian header length, a UTF-8 JSON
header, then the raw array payload. The header carries free-form metadata
plus one manifest entry per array: name, shape, dtype and byte offset into
the payload. Arrays are stored little-endian row-major, so files written on
any supported platform load bit-exactly on any other.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC_MODEL = b"NSRN1"
MAGIC_RIDGE = b"NSRR1"

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_arrays(path, magic: bytes, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        if arr.dtype.name not in _DTYPES:
            raise DataError(f"array {name!r} has unsupported dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[arr.dtype.name]).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.name,
            "offset": len(payload),
        })
        payload.extend(raw)
    header = json.dumps({"meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_arrays(path, magic: bytes) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(magic) + 8 or blob[:len(magic)] != magic:
        raise DataError(
            f"{path}: bad magic, expected {magic.decode()} "
            f"(got {blob[:len(magic)]!r})"
        )
    hlen = struct.unpack("<Q", blob[len(magic):len(magic) + 8])[0]
    hstart = len(magic) + 8
    if hstart + hlen > len(blob):
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(blob[hstart:hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable header: {exc}") from exc
    payload = blob[hstart + hlen:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        dtype = entry["dtype"]
        if dtype not in _DTYPES:
            raise DataError(f"{path}: entry {entry['name']!r} has dtype {dtype}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        off = entry["offset"]
        if off + nbytes > len(payload):
            raise DataError(
                f"{path}: entry {entry['name']!r} overruns payload "
                f"({off}+{nbytes} > {len(payload)})"
            )
        arr = np.frombuffer(payload[off:off + nbytes],
                            dtype=_DTYPES[dtype]).reshape(shape)
        arrays[entry["name"]] = arr.astype(dtype)  # native byte order, writable
    return arrays, header.get("meta", {})

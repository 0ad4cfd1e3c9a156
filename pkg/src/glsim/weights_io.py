"""Single-file weight container.

Layout::

    u64 little-endian  header length in bytes (JSON text plus trailing newline)
    UTF-8 JSON header  {"config": {...}, "tensors": {name: {"shape": [...], "offset": int}}}
    "\n"
    blob               concatenated little-endian float32 arrays

Offsets are relative to the start of the blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from glsim.config import ArchConfig
from glsim.encoder import WeightSet, from_named_arrays
from glsim.errors import DecodeError, GLSimError

_LEN = struct.Struct("<Q")
_LE_F32 = np.dtype("<f4")


def dumps(weights: WeightSet) -> bytes:
    tensors = {}
    blobs = []
    offset = 0
    for name, arr in weights.named_arrays():
        data = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        tensors[name] = {"shape": list(arr.shape), "offset": offset}
        blobs.append(data)
        offset += len(data)
    header = {"config": weights.config.to_dict(), "tensors": tensors}
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    return _LEN.pack(len(text)) + text + b"".join(blobs)


def loads(data: bytes) -> WeightSet:
    if len(data) < _LEN.size:
        raise DecodeError("weight file truncated before header length", offset=0)
    (hlen,) = _LEN.unpack_from(data, 0)
    start = _LEN.size
    if start + hlen > len(data):
        raise DecodeError(f"declared header length {hlen} exceeds file size", offset=0)
    text = data[start:start + hlen]
    if not text.endswith(b"\n"):
        raise DecodeError("header not newline-terminated", offset=start + hlen - 1)
    try:
        header = json.loads(text.decode("utf-8"))
        config = ArchConfig.from_dict(header["config"])
        entries = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DecodeError(f"malformed header: {exc}", offset=start) from None
    except GLSimError as exc:
        raise DecodeError(f"invalid config in header: {exc}", offset=start) from None

    blob = memoryview(data)[start + hlen:]
    arrays = {}
    for name, meta in entries.items():
        shape = tuple(int(s) for s in meta["shape"])
        off = int(meta["offset"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if off < 0 or off + nbytes > len(blob):
            raise DecodeError(f"tensor {name!r} runs past end of file", offset=start + hlen + off)
        arrays[name] = np.frombuffer(blob, dtype=_LE_F32, count=nbytes // 4, offset=off).reshape(shape)
    return from_named_arrays(arrays, config)


def save(weights: WeightSet, path) -> None:
    Path(path).write_bytes(dumps(weights))


def load(path) -> WeightSet:
    return loads(Path(path).read_bytes())

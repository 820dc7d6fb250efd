"""Versioned model files: a JSON header followed by raw float64 arrays.

Layout (little-endian)::

    b"PMDL" u32 version u32 header_len  header_json  array bytes...

The header records the model type, every array's name/shape/offset, and
any training metadata (dims, hyperparameters, seed) passed by the caller.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, InconsistentCounts, MissingFile
from .gate import GateModel
from .mlp import MlpModel

MAGIC = b"PMDL"
VERSION = 1
_PREFIX = struct.Struct("<4sII")

_MLP_ARRAYS = ("W1", "b1", "gamma", "beta", "running_mean", "running_var", "W2", "b2")


def save_model(path, model, meta: dict | None = None) -> None:
    if isinstance(model, MlpModel):
        kind, names = "mlp", _MLP_ARRAYS
        extra = {"momentum": model.momentum, "eps": model.eps}
    elif isinstance(model, GateModel):
        kind, names = "gate", ("W", "b")
        extra = {"k": model.k, "normalize": model.normalize}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    arrays, offset, blobs = [], 0, []
    for name in names:
        arr = np.ascontiguousarray(getattr(model, name), dtype="<f8")
        arrays.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"type": kind, "version": VERSION, "params": extra, "arrays": arrays, "meta": meta or {}}
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(text)))
        fh.write(text)
        for blob in blobs:
            fh.write(blob)


def load_model(path):
    """Return ``(model, header)``."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"model file not found: {path}")
    buf = path.read_bytes()
    if len(buf) < _PREFIX.size:
        raise InconsistentCounts(f"{path}: truncated header")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise InconsistentCounts(f"{path}: unsupported model version {version}")
    try:
        header = json.loads(buf[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InconsistentCounts(f"{path}: bad header ({exc})") from None
    base = _PREFIX.size + hlen
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        start = base + spec["offset"]
        if start + 8 * count > len(buf):
            raise InconsistentCounts(f"{path}: array {spec['name']} runs past end of file")
        arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8", count=count, offset=start).reshape(spec["shape"]).copy()
    params = header["params"]
    if header["type"] == "mlp":
        model = MlpModel(*(arrays[n] for n in _MLP_ARRAYS), momentum=params["momentum"], eps=params["eps"])
    elif header["type"] == "gate":
        model = GateModel(arrays["W"], arrays["b"], params["k"], params["normalize"])
    else:
        raise InconsistentCounts(f"{path}: unknown model type {header['type']!r}")
    return model, header

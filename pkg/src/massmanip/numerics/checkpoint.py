"""Checkpoint files: JSON header + little-endian float32 parameter blob (.ckpt)."""

from __future__ import annotations

import datetime
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError


def _named_arrays(params):
    """Flatten nested dict/list param structures to (dotted-name, array) pairs."""
    out = []

    def walk(node, prefix):
        if isinstance(node, np.ndarray):
            out.append((prefix, node))
        elif isinstance(node, dict):
            for k in node:
                walk(node[k], f"{prefix}.{k}" if prefix else str(k))
        else:
            for i, v in enumerate(node):
                walk(v, f"{prefix}.{i}" if prefix else str(i))

    walk(params, "")
    return out


def save_checkpoint(path, params, spec=None, step: int = 0, meta: dict | None = None):
    """Write params (nested dict/list of float32 arrays) with a JSON header."""
    path = Path(path)
    named = _named_arrays(params)
    header = {
        "spec": spec if spec is None or isinstance(spec, dict) else spec.to_json(),
        "step": int(step),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "params": [{"name": n, "shape": list(a.shape)} for n, a in named],
        "meta": meta or {},
    }
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in named)
    hb = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(blob)
    return path


def load_checkpoint(path):
    """Returns (header dict, {dotted-name: float32 array})."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    arrays = {}
    off = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        arrays[entry["name"]] = arr
        off += 4 * n
    if off != len(blob):
        raise ConfigError(f"checkpoint blob size mismatch in {path}: header declares {off}, file has {len(blob)}")
    return header, arrays


def restore_into(params, arrays: dict):
    """Copy loaded arrays back into a same-structured param tree."""
    for name, arr in _named_arrays(params):
        if name not in arrays:
            raise ConfigError(f"checkpoint missing parameter {name!r}")
        if arrays[name].shape != arr.shape:
            raise ConfigError(f"checkpoint param {name!r} shape {arrays[name].shape} vs expected {arr.shape}")
        arr[...] = arrays[name]
    return params

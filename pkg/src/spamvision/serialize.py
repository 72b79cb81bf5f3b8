"""Canonical JSON rendering, atomic file writes, and float-array blobs.

Every JSON artifact (reports, model envelopes) is rendered through
``canonical_json`` so that identical inputs always produce identical bytes:
keys are sorted, floats carry 17 significant digits, and there is no
whitespace. Files are written to a temporary sibling and renamed into place,
so an interrupted run never leaves a truncated file at the final path.
"""
from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = "1"


def format_float(x: float) -> str:
    """Render a finite float with 17 significant digits, keeping a marker
    ('.' or 'e') so the value re-parses as a float rather than an int."""
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _render(obj, out: list) -> None:
    if isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _render(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _render(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def canonical_json(obj) -> str:
    out: list = []
    _render(obj, out)
    return "".join(out)


def config_hash(config: dict) -> str:
    """Stable hex digest of a resolved configuration dict."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def encode_array(a: np.ndarray) -> dict:
    """Pack an array as shape + base64 little-endian float64 bytes."""
    arr = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "dtype": "float64-le",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).copy()

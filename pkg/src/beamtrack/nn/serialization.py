"""JSON weight files: named tensors plus a free-form header.

Floats are written with ``repr`` precision so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_weights(path, tensors: dict, header: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "header": header or {},
        "tensors": [
            {"name": name, "shape": list(np.shape(arr)), "values": np.asarray(arr, dtype=float).ravel().tolist()}
            for name, arr in tensors.items()
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_weights(path) -> tuple[dict, dict]:
    """Returns ``(tensors, header)``."""
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported weight format version {version!r}")
    tensors = {}
    for t in doc["tensors"]:
        arr = np.asarray(t["values"], dtype=float)
        shape = tuple(t["shape"])
        if arr.size != int(np.prod(shape)):
            raise ValueError(f"{path}: tensor {t['name']} has {arr.size} values for shape {shape}")
        tensors[t["name"]] = arr.reshape(shape)
    return tensors, doc.get("header", {})

"""Checkpoint format: JSON manifest + little-endian float64 blob.

``<stem>.json`` lists parameter names, shapes and byte offsets; ``<stem>.bin``
holds the raw values in manifest order. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

FORMAT_NAME = "neuroscope-checkpoint-v1"


def save_checkpoint(stem, params: Mapping[str, np.ndarray], extra: Optional[dict] = None) -> None:
    """Write ``<stem>.json`` and ``<stem>.bin`` for an ordered parameter map."""
    stem = Path(stem)
    entries = []
    chunks = []
    offset = 0
    for name, arr in params.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        raw = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT_NAME, "dtype": "<f8", "params": entries}
    if extra is not None:
        manifest["extra"] = extra
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    stem.with_suffix(".bin").write_bytes(b"".join(chunks))


def load_checkpoint(stem) -> tuple["OrderedDict[str, np.ndarray]", Optional[dict]]:
    """Read a checkpoint back; returns (name -> float64 array, extra)."""
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("format") != FORMAT_NAME:
        raise ValueError(f"unrecognized checkpoint format in {stem.with_suffix('.json')}")
    blob = stem.with_suffix(".bin").read_bytes()
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in manifest["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f8").reshape(entry["shape"])
        params[entry["name"]] = arr.astype(np.float64)
    return params, manifest.get("extra")

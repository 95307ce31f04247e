"""Versioned JSON checkpoints for trained weights.

A checkpoint is a single JSON document:

    {
      "format_version": 1,
      "input_dim": ...,
      "hidden_dims": [...],
      "activation_flag": "sigmoid" | "tanh",
      "tensors": {name: {"shape": [...], "data": [row-major floats]}},
      ...extra model-specific keys (task_tag, pad_length, role, ...)
    }

Floats are written with Python's shortest round-trip repr (<= 17 significant
decimal digits), so save -> load reproduces every value bit-exactly.  Keys are
sorted, making the byte stream a deterministic function of the weights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParseError

FORMAT_VERSION = 1

RESERVED_KEYS = {"format_version", "input_dim", "hidden_dims", "activation_flag", "tensors"}


@dataclass
class Checkpoint:
    input_dim: int
    hidden_dims: list[int]
    activation_flag: str
    tensors: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def save_checkpoint(
    path: str | Path,
    *,
    input_dim: int,
    hidden_dims: list[int],
    activation_flag: str,
    tensors: dict[str, np.ndarray],
    extra: dict | None = None,
) -> Path:
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "input_dim": int(input_dim),
        "hidden_dims": [int(h) for h in hidden_dims],
        "activation_flag": activation_flag,
        "tensors": {
            name: {
                "shape": list(arr.shape),
                "data": [float(x) for x in np.asarray(arr, dtype=np.float64).ravel()],
            }
            for name, arr in tensors.items()
        },
    }
    for key, value in (extra or {}).items():
        if key in RESERVED_KEYS:
            raise ValueError(f"extra key {key!r} collides with a reserved checkpoint key")
        doc[key] = value
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, allow_nan=False, separators=(",", ":"))
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format_version: {version!r}")
    tensors = {}
    for name, spec in doc["tensors"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        tensors[name] = arr
    extra = {k: v for k, v in doc.items() if k not in RESERVED_KEYS}
    return Checkpoint(
        input_dim=doc["input_dim"],
        hidden_dims=list(doc["hidden_dims"]),
        activation_flag=doc["activation_flag"],
        tensors=tensors,
        extra=extra,
    )

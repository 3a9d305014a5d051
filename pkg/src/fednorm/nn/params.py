"""Named, kind-tagged parameter tensors and the on-disk checkpoint format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("conv", "norm", "other")


@dataclass
class LayerParam:
    name: str
    kind: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0


def snapshot(params: list[LayerParam]) -> dict[str, np.ndarray]:
    """Copy parameter values into an ordered name -> array mapping."""
    return {p.name: p.value.copy() for p in params}


def load_values(params: list[LayerParam], values: dict[str, np.ndarray], kinds=None):
    """Overwrite parameter values in place, optionally only for some kinds."""
    for p in params:
        if kinds is not None and p.kind not in kinds:
            continue
        src = values[p.name]
        if src.shape != p.value.shape:
            raise ValueError(f"shape mismatch for {p.name}: {src.shape} vs {p.value.shape}")
        p.value[...] = src


def save_checkpoint(path, names, kinds, values):
    """Write ``manifest.json`` + ``params.bin`` (little-endian float32, manifest order)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "params": [
            {"name": n, "kind": k, "shape": list(values[n].shape)} for n, k in zip(names, kinds)
        ]
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    with open(path / "params.bin", "wb") as fh:
        for n in names:
            fh.write(np.ascontiguousarray(values[n], dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[list[str], list[str], dict[str, np.ndarray]]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    raw = np.fromfile(path / "params.bin", dtype="<f4")
    names, kinds, values, offset = [], [], {}, 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        if offset + size > raw.size:
            raise ValueError(f"params.bin too short for {entry['name']}")
        values[entry["name"]] = raw[offset:offset + size].reshape(shape).astype(np.float32)
        names.append(entry["name"])
        kinds.append(entry["kind"])
        offset += size
    if offset != raw.size:
        raise ValueError(f"params.bin has {raw.size - offset} trailing values")
    return names, kinds, values

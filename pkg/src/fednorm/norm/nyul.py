"""Piecewise-linear histogram standardization (Nyul & Udupa style).

Fitting collects brain-intensity percentiles at a fixed grid for every
training volume, rescales each landmark vector so its ends land on the
standard range, and averages.  Applying maps a volume's own landmarks onto
those standard positions by linear interpolation, extending the first and
last segments beyond the end landmarks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basic import NormalizationError, brain_values

DEFAULT_GRID = (1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 99.0)
STANDARD_RANGE = (0.0, 100.0)


@dataclass(frozen=True)
class NyulStandardScale:
    grid: tuple[float, ...]
    positions: tuple[float, ...]
    modality: str = ""

    def __post_init__(self):
        if len(self.grid) != len(self.positions):
            raise ValueError("grid and standard positions differ in length")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("standard positions must be strictly increasing")

    def to_json(self) -> str:
        return json.dumps({"modality": self.modality, "grid": list(self.grid), "positions": list(self.positions)})

    @classmethod
    def from_json(cls, text: str) -> "NyulStandardScale":
        d = json.loads(text)
        return cls(tuple(d["grid"]), tuple(d["positions"]), d.get("modality", ""))


def landmarks(vol, brain_mask, grid=DEFAULT_GRID) -> np.ndarray:
    b = brain_values(vol, brain_mask)
    if b.size == 0:
        raise NormalizationError("no brain voxels")
    return np.percentile(b, grid)


def rescale_landmarks(lm, s_min=STANDARD_RANGE[0], s_max=STANDARD_RANGE[1]) -> np.ndarray:
    lm = np.asarray(lm, dtype=np.float64)
    return s_min + (lm - lm[0]) / (lm[-1] - lm[0]) * (s_max - s_min)


def nyul_fit(train_vols, grid=DEFAULT_GRID, modality: str = "",
             standard_range=STANDARD_RANGE) -> NyulStandardScale:
    """``train_vols`` is a sequence of ``(volume, brain_mask)`` pairs of one modality."""
    train_vols = list(train_vols)
    if not train_vols:
        raise NormalizationError("nyul_fit needs at least one training volume")
    rescaled = []
    for k, (vol, mask) in enumerate(train_vols):
        lm = landmarks(vol, mask, grid)
        if np.any(np.diff(lm) <= 0):
            raise NormalizationError(f"training volume {k}: landmarks are not strictly increasing")
        rescaled.append(rescale_landmarks(lm, *standard_range))
    positions = np.mean(rescaled, axis=0)
    return NyulStandardScale(tuple(float(g) for g in grid), tuple(float(p) for p in positions), modality)


def piecewise_linear(values, src, dst) -> np.ndarray:
    """Monotone map sending ``src[i] -> dst[i]``, extrapolating the end segments."""
    v = np.asarray(values, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    out = np.interp(v, src, dst)
    lo_slope = (dst[1] - dst[0]) / (src[1] - src[0])
    hi_slope = (dst[-1] - dst[-2]) / (src[-1] - src[-2])
    below = v < src[0]
    above = v > src[-1]
    out[below] = dst[0] + (v[below] - src[0]) * lo_slope
    out[above] = dst[-1] + (v[above] - src[-1]) * hi_slope
    return out


def nyul_apply(vol, brain_mask, scale: NyulStandardScale | None) -> np.ndarray:
    if scale is None:
        raise NormalizationError("Nyul scale has not been fitted")
    lm = landmarks(vol, brain_mask, scale.grid)
    if np.any(np.diff(lm) <= 0):
        raise NormalizationError("volume landmarks are not strictly increasing")
    return piecewise_linear(vol, lm, scale.positions).astype(np.float32)

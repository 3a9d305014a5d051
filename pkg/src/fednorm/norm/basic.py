from __future__ import annotations

import numpy as np


class NormalizationError(ValueError):
    pass


def brain_values(vol, brain_mask) -> np.ndarray:
    return np.asarray(vol, dtype=np.float64)[np.asarray(brain_mask) > 0]


def normalize_minmax(vol) -> np.ndarray:
    """Rescale the whole volume (background included) to [0, 1]."""
    v = np.asarray(vol, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise NormalizationError("degenerate range: volume is constant")
    out = (v - lo) / (hi - lo)
    return out.astype(np.float32)


def normalize_zscore(vol, brain_mask) -> np.ndarray:
    """Subtract the brain mean and divide by the brain (population) std, for all voxels."""
    b = brain_values(vol, brain_mask)
    if b.size < 2:
        raise NormalizationError("z-score needs at least 2 brain voxels")
    mu, sigma = b.mean(), b.std()
    if not sigma > 0:
        raise NormalizationError("z-score: brain intensities have zero variance")
    return ((np.asarray(vol, dtype=np.float64) - mu) / sigma).astype(np.float32)

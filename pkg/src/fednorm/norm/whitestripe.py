"""WhiteStripe: z-score by the statistics of a narrow quantile band around the WM mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .basic import NormalizationError, brain_values

N_BINS = 200
BANDWIDTH_BINS = 2.0
# a local maximum counts as a tissue mode when at least this fraction of the tallest one
PROMINENCE = 0.2


@dataclass(frozen=True)
class WhiteStripeInterval:
    mode_intensity: float
    lo: float
    hi: float
    tau: float = 0.05


def smoothed_histogram(values, bins=N_BINS, bandwidth=BANDWIDTH_BINS):
    counts, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    smooth = gaussian_filter1d(counts.astype(np.float64), bandwidth, mode="constant")
    centers = 0.5 * (edges[:-1] + edges[1:])
    return smooth, centers


def local_maxima(h: np.ndarray) -> np.ndarray:
    left = np.r_[-np.inf, h[:-1]]
    right = np.r_[h[1:], -np.inf]
    return np.flatnonzero((h > left) & (h >= right))


def whitestripe_interval(vol, brain_mask, modality: str = "T1", tau: float = 0.05) -> WhiteStripeInterval:
    if not 0 < tau < 0.5:
        raise NormalizationError(f"tau must lie in (0, 0.5), got {tau}")
    b = np.sort(brain_values(vol, brain_mask))
    if b.size < 100:
        raise NormalizationError(f"WhiteStripe needs >= 100 brain voxels, got {b.size}")
    if not b[-1] > b[0]:
        raise NormalizationError("brain intensities are constant")
    h, centers = smoothed_histogram(b)
    peaks = local_maxima(h)
    if peaks.size == 0:
        raise NormalizationError("no local maximum in the smoothed histogram")
    if modality.upper() == "T1":
        prominent = peaks[h[peaks] >= PROMINENCE * h[peaks].max()]
        mode_bin = prominent.max()
    else:
        mode_bin = peaks[np.argmax(h[peaks])]
    mode = float(centers[mode_bin])
    f_mode = np.searchsorted(b, mode, side="right") / b.size
    lo, hi = np.quantile(b, [max(f_mode - tau, 0.0), min(f_mode + tau, 1.0)])
    if not lo < mode < hi:
        raise NormalizationError(f"degenerate stripe around mode {mode}: [{lo}, {hi}]")
    return WhiteStripeInterval(mode, float(lo), float(hi), tau)


def normalize_whitestripe(vol, interval: WhiteStripeInterval, brain_mask) -> np.ndarray:
    b = brain_values(vol, brain_mask)
    stripe = b[(b >= interval.lo) & (b <= interval.hi)]
    if stripe.size < 2:
        raise NormalizationError(f"WhiteStripe band holds {stripe.size} voxels")
    mu, sigma = stripe.mean(), stripe.std()
    if not sigma > 0:
        raise NormalizationError("WhiteStripe band has zero variance")
    return ((np.asarray(vol, dtype=np.float64) - mu) / sigma).astype(np.float32)

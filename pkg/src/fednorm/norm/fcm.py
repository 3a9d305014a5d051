"""Fuzzy c-means on brain intensities; the white-matter cluster mean is the divisor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basic import NormalizationError, brain_values

# which sorted cluster is white matter, by contrast
WM_CLUSTER = {"T1": "highest", "T2": "lowest", "FLAIR": "middle"}


@dataclass(frozen=True)
class FcmModel:
    c: int
    m: float
    means: tuple[float, ...]
    wm_mean: float
    iterations: int = 0


def fcm_memberships(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """Membership matrix (n, c).  A voxel sitting on a centre belongs to it fully."""
    d = np.abs(x[:, None] - centers[None, :])
    zero = d == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = d ** (-2.0 / (m - 1.0))
        u = inv / inv.sum(axis=1, keepdims=True)
    hit = zero.any(axis=1)
    if hit.any():
        first = zero[hit].argmax(axis=1)
        u[hit] = 0.0
        u[np.flatnonzero(hit), first] = 1.0
    return u


def fcm_cluster(x, c: int = 3, m: float = 2.0, tol: float = 1e-4, max_iter: int = 100):
    """Return ``(sorted centres, iterations)`` for 1D data ``x``."""
    if c < 2:
        raise NormalizationError(f"fuzzy c-means needs c >= 2, got {c}")
    if not m > 1:
        raise NormalizationError(f"fuzziness m must exceed 1, got {m}")
    x = np.asarray(x, dtype=np.float64).ravel()
    if np.unique(x).size < c:
        raise NormalizationError(f"need at least {c} distinct intensities")
    centers = np.quantile(x, (np.arange(c) + 0.5) / c)
    u = fcm_memberships(x, centers, m)
    for it in range(1, max_iter + 1):
        um = u ** m
        centers = (um.T @ x) / um.sum(axis=0)
        u_new = fcm_memberships(x, centers, m)
        delta = np.abs(u_new - u).max()
        u = u_new
        if delta < tol:
            return np.sort(centers), it
    raise NormalizationError(f"fuzzy c-means did not converge in {max_iter} iterations")


def fcm_fit(vol, brain_mask, modality: str = "T1", c: int = 3, m: float = 2.0,
            tol: float = 1e-4, max_iter: int = 100) -> FcmModel:
    centers, iters = fcm_cluster(brain_values(vol, brain_mask), c, m, tol, max_iter)
    rule = WM_CLUSTER.get(modality.upper(), "highest")
    idx = {"highest": c - 1, "lowest": 0, "middle": c // 2}[rule]
    wm = float(centers[idx])
    if not wm > 0:
        raise NormalizationError(f"white-matter cluster mean must be positive, got {wm}")
    return FcmModel(c, m, tuple(float(v) for v in centers), wm, iters)


def normalize_fcm(vol, model: FcmModel) -> np.ndarray:
    if not model.wm_mean > 0:
        raise NormalizationError("wm_mean must be positive")
    return (np.asarray(vol, dtype=np.float64) / model.wm_mean).astype(np.float32)

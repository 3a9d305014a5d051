"""Generalized Dice score and loss for a single-channel tumor probability map.

The two classes are tumor ``(p, t)`` and background ``(1 - p, 1 - t)``.  Each
class is weighted by the inverse squared target count, with ``eps`` added to
that squared count only; this keeps an empty tumor class finite and makes
``GDS(empty, empty) == 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class DiceResult:
    gds: float
    weights: tuple[float, float]
    eps: float


def _check(p, t):
    p = np.asarray(p)
    t = np.asarray(t)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs target {t.shape}")
    return p.astype(np.float64).ravel(), t.astype(np.float64).ravel()


def _terms(p, t, eps):
    n = p.size
    tumor = t.sum()
    w1 = 1.0 / (tumor * tumor + eps)
    w2 = 1.0 / ((n - tumor) ** 2 + eps)
    inter_fg = (t * p).sum()
    inter_bg = n - tumor - p.sum() + inter_fg  # sum of (1-t)(1-p)
    num = w1 * inter_fg + w2 * inter_bg
    den = w1 * (tumor + p.sum()) + w2 * (2 * n - tumor - p.sum())
    return w1, w2, num, den


def generalized_dice_score(p, t, eps: float = DEFAULT_EPS) -> DiceResult:
    p, t = _check(p, t)
    w1, w2, num, den = _terms(p, t, eps)
    return DiceResult(gds=float(2.0 * num / den), weights=(w1, w2), eps=eps)


def gdl_with_grad(p, t, eps: float = DEFAULT_EPS):
    """Return ``(1 - GDS, dLoss/dP)``; the gradient has the shape and dtype of ``p``."""
    p_in = np.asarray(p)
    pf, tf = _check(p_in, t)
    w1, w2, num, den = _terms(pf, tf, eps)
    # d num/dp = w1 t - w2 (1 - t);  d den/dp = w1 - w2
    dnum = w1 * tf - w2 * (1.0 - tf)
    dden = w1 - w2
    dgds = 2.0 * (dnum * den - num * dden) / (den * den)
    loss = 1.0 - 2.0 * num / den
    grad = (-dgds).reshape(p_in.shape).astype(p_in.dtype if p_in.dtype.kind == "f" else np.float64)
    return float(loss), grad


def gds_volume(p_stack, t_stack, eps: float = DEFAULT_EPS) -> DiceResult:
    """3D variant: one score over every voxel of the concatenated slice stack."""
    return generalized_dice_score(p_stack, t_stack, eps)

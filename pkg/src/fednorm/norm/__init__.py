"""Intensity normalization methods and per-subset application."""

from __future__ import annotations

import enum

from .basic import NormalizationError, normalize_minmax, normalize_zscore
from .fcm import FcmModel, fcm_fit, normalize_fcm
from .nyul import NyulStandardScale, nyul_apply, nyul_fit
from .whitestripe import WhiteStripeInterval, normalize_whitestripe, whitestripe_interval
from ..volume import MODALITIES, Study


class NormMethod(str, enum.Enum):
    RAW = "raw"
    MINMAX = "minmax"
    ZSCORE = "zscore"
    NYUL = "nyul"
    FCM = "fcm"
    WHITESTRIPE = "whitestripe"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    NormMethod.RAW: "Raw",
    NormMethod.MINMAX: "MinMax",
    NormMethod.ZSCORE: "Z-score",
    NormMethod.NYUL: "Nyul",
    NormMethod.FCM: "FCM",
    NormMethod.WHITESTRIPE: "WhiteStripe",
}

# fixed arm order used everywhere (clients, matrix columns)
METHOD_ORDER = tuple(NormMethod)


def fit_nyul_scales(fit_pool) -> dict[str, NyulStandardScale]:
    """One standard scale per modality, learned from the given (training) studies."""
    fit_pool = list(fit_pool)
    if not fit_pool:
        raise NormalizationError("Nyul needs a non-empty fit pool")
    return {
        mod: nyul_fit([(s.modality(mod), s.brain_mask) for s in fit_pool], modality=mod)
        for mod in MODALITIES
    }


def normalize_volume(vol, brain_mask, modality: str, method: NormMethod, nyul_scales=None):
    method = NormMethod(method)
    if method is NormMethod.RAW:
        return vol
    if method is NormMethod.MINMAX:
        return normalize_minmax(vol)
    if method is NormMethod.ZSCORE:
        return normalize_zscore(vol, brain_mask)
    if method is NormMethod.NYUL:
        if not nyul_scales or modality not in nyul_scales:
            raise NormalizationError(f"no fitted Nyul scale for {modality}")
        return nyul_apply(vol, brain_mask, nyul_scales[modality])
    if method is NormMethod.FCM:
        return normalize_fcm(vol, fcm_fit(vol, brain_mask, modality))
    if method is NormMethod.WHITESTRIPE:
        return normalize_whitestripe(vol, whitestripe_interval(vol, brain_mask, modality), brain_mask)
    raise ValueError(method)  # pragma: no cover


def normalize_study(study: Study, method: NormMethod, nyul_scales=None) -> Study:
    if NormMethod(method) is NormMethod.RAW:
        return study
    try:
        vols = {
            mod.lower(): normalize_volume(study.modality(mod), study.brain_mask, mod, method, nyul_scales)
            for mod in MODALITIES
        }
    except NormalizationError as exc:
        raise NormalizationError(f"{study.subject_id}: {exc}") from exc
    return study.replace(**vols)


def normalize_subset(studies, method: NormMethod, fit_pool=(), nyul_scales=None) -> list[Study]:
    """Normalize each study per modality.  Nyul is fitted on ``fit_pool`` unless scales are given.

    Masks and dims pass through untouched; ``raw`` returns the inputs.
    """
    method = NormMethod(method)
    if method is NormMethod.NYUL and nyul_scales is None:
        nyul_scales = fit_nyul_scales(fit_pool)
    return [normalize_study(s, method, nyul_scales) for s in studies]


__all__ = [
    "METHOD_ORDER", "FcmModel", "NormMethod", "NormalizationError", "NyulStandardScale",
    "WhiteStripeInterval", "fcm_fit", "fit_nyul_scales", "normalize_fcm", "normalize_minmax",
    "normalize_study", "normalize_subset", "normalize_volume", "normalize_whitestripe",
    "normalize_zscore", "nyul_apply", "nyul_fit", "whitestripe_interval",
]

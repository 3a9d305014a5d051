"""In-memory building blocks of the experiment: arms, clients and common test sets."""

from __future__ import annotations

from dataclasses import dataclass

from .federated import ClientState
from .norm import METHOD_ORDER, NormMethod, fit_nyul_scales, normalize_subset
from .volume import CohortSplit, Study, extract_slices


@dataclass
class Arm:
    """One normalization arm: its subset's splits, normalized, plus the common test copy."""

    method: NormMethod
    train: list[Study]
    test: list[Study]
    val: list[Study]
    common_test: list[Study]
    nyul_scales: dict | None = None


def build_arms(studies: dict[str, Study], split: CohortSplit, methods=METHOD_ORDER) -> list[Arm]:
    """Normalize subset k with method k; the common test ids are normalized all six ways.

    Nyul scales are fitted on the Nyul arm's training split only, then applied
    to that arm's test/val splits and to the Nyul copy of the common test set.
    """
    if len(methods) != len(split.subsets):
        raise ValueError(f"{len(methods)} methods for {len(split.subsets)} subsets")
    common = [studies[i] for i in split.common_test]
    arms = []
    for method, subset in zip(methods, split.subsets):
        train = [studies[i] for i in subset.train]
        scales = fit_nyul_scales(train) if NormMethod(method) is NormMethod.NYUL else None

        def norm(group, method=method, scales=scales):
            return normalize_subset(group, method, nyul_scales=scales)

        test = [studies[i] for i in subset.test]
        val = [studies[i] for i in subset.val]
        arms.append(Arm(NormMethod(method), norm(train), norm(test), norm(val), norm(common), scales))
    return arms


def slices_of(studies) -> list:
    return [s for study in studies for s in extract_slices(study)]


def make_clients(arms: list[Arm]) -> list[ClientState]:
    return [
        ClientState(k, arm.method, slices_of(arm.train), list(arm.test), slices_of(arm.val))
        for k, arm in enumerate(arms)
    ]


def common_test_sets(arms: list[Arm]) -> dict[NormMethod, list[Study]]:
    return {arm.method: arm.common_test for arm in arms}

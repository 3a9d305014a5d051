"""Synthetic multi-modal brain phantoms.

Each subject is an ellipsoidal "brain" made of concentric CSF / GM / WM
shells with up to two spherical tumors.  Voxels get a per-tissue mean plus
Gaussian noise, and then a per-subject, per-modality affine jitter
``scale * v + offset`` that mimics scanner and protocol drift.  That jitter is
the raw-intensity heterogeneity the normalizers are meant to remove.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .nn.rng import RngStream, mix_seed
from .volume import Study, save_study

BACKGROUND, CSF, GM, WM, TUMOR = 0, 1, 2, 3, 4
TISSUES = ("csf", "gm", "wm", "tumor")


def _default_means():
    # (CSF, GM, WM, tumor) in scanner-like arbitrary units; each modality has its own
    # intrinsic scale.  T1: WM > GM > CSF; T2: reversed; FLAIR: GM > WM > CSF.
    # The tumor is the brightest tissue on all three.
    return {
        "T1": (250.0, 550.0, 800.0, 900.0),
        "T2": (2700.0, 1800.0, 1200.0, 3000.0),
        "FLAIR": (60.0, 90.0, 80.0, 105.0),
    }


def _default_stds():
    # WM noise differs by modality relative to the tissue spread, so that
    # WM-referenced normalizers rescale the channels differently from brain z-scoring.
    return {
        "T1": (40.0, 40.0, 20.0, 40.0),
        "T2": (120.0, 120.0, 150.0, 120.0),
        "FLAIR": (4.0, 4.0, 2.0, 5.0),
    }


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (64, 64, 12)  # (nx, ny, nz)
    means: dict = field(default_factory=_default_means)
    stds: dict = field(default_factory=_default_stds)
    brain_axes: tuple[float, float, float] = (26.0, 29.0, 5.5)  # semi-axes in voxels (x, y, z)
    axes_jitter: float = 0.03
    center_jitter: tuple[float, float, float] = (1.5, 1.5, 0.5)  # voxels (x, y, z)
    shell_radii: tuple[float, float] = (0.72, 0.88)  # WM inside the first, GM up to the second
    tumor_probability: float = 0.9
    tumor_radius: tuple[float, float] = (4.0, 7.0)
    scale_range: tuple[float, float] = (0.5, 2.0)
    offset_range: tuple[float, float] = (0.0, 50.0)
    seed: int = 0

    def __post_init__(self):
        for mod in ("T1", "T2", "FLAIR"):
            if any(s <= 0 for s in self.stds[mod]):
                raise ValueError(f"{mod}: tissue stddevs must be positive")
        t1 = self.means["T1"][:3]
        gap = min(abs(a - b) for i, a in enumerate(t1) for b in t1[i + 1:])
        if gap < 3 * max(self.stds["T1"]):
            raise ValueError("T1 CSF/GM/WM means must be separated by >= 3 of the largest T1 stddev")
        if not 0.0 <= self.tumor_probability <= 1.0:
            raise ValueError("tumor_probability must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "means": {k: list(v) for k, v in self.means.items()},
            "stds": {k: list(v) for k, v in self.stds.items()},
            "brain_axes": list(self.brain_axes),
            "axes_jitter": self.axes_jitter,
            "center_jitter": list(self.center_jitter),
            "shell_radii": list(self.shell_radii),
            "tumor_probability": self.tumor_probability,
            "tumor_radius": list(self.tumor_radius),
            "scale_range": list(self.scale_range),
            "offset_range": list(self.offset_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        d = dict(d)
        for key in ("dims", "brain_axes", "center_jitter", "shell_radii", "tumor_radius", "scale_range", "offset_range"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("means", "stds"):
            if key in d:
                d[key] = {k: tuple(v) for k, v in d[key].items()}
        return cls(**d)

    def with_seed(self, seed: int) -> "PhantomConfig":
        return replace(self, seed=seed)


def tissue_labels(cfg: PhantomConfig, rng: RngStream) -> np.ndarray:
    """Label volume in (z, y, x) order; labels 1-4 only inside the brain ellipsoid."""
    nx, ny, nz = cfg.dims
    ax = np.array(cfg.brain_axes) * (1.0 + cfg.axes_jitter * rng.uniform(-1, 1, 3))
    center = np.array([(nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2]) + rng.uniform(-1, 1, 3) * np.asarray(cfg.center_jitter)
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    r = np.sqrt(((x - center[0]) / ax[0]) ** 2 + ((y - center[1]) / ax[1]) ** 2 + ((z - center[2]) / ax[2]) ** 2)
    labels = np.zeros((nz, ny, nx), dtype=np.int8)
    wm_r, gm_r = cfg.shell_radii
    labels[r < 1.0] = CSF
    labels[r < gm_r] = GM
    labels[r < wm_r] = WM

    n_tumors = 0
    if rng.random() < cfg.tumor_probability:
        n_tumors = 1 + int(rng.random() < 0.5)
    for _ in range(n_tumors):
        radius = rng.uniform(*cfg.tumor_radius)
        # centre somewhere in the WM/GM core, well away from the brain edge
        while True:
            u = rng.uniform(-1, 1, 3)
            if np.linalg.norm(u) < 0.6:
                break
        c = center + u * ax * [1.0, 1.0, 0.5]
        d = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
        blob = (d <= radius) & (labels >= GM)
        blob[tuple(np.clip(np.round(c[::-1]).astype(int), 0, [nz - 1, ny - 1, nx - 1]))] = True
        labels[blob] = TUMOR
    return labels


def generate_study(cfg: PhantomConfig, subject_seed: int, subject_id: str | None = None):
    """Return ``(Study, labels)`` for one subject; bit-identical for equal inputs."""
    rng = RngStream(subject_seed, "phantom")
    labels = tissue_labels(cfg, rng.child("anatomy"))
    vols = {}
    for mod in ("T1", "T2", "FLAIR"):
        mrng = rng.child("intensity", mod)
        means = np.array((0.0,) + tuple(cfg.means[mod]))
        stds = np.array((0.0,) + tuple(cfg.stds[mod]))
        v = means[labels] + stds[labels] * mrng.standard_normal(labels.shape)
        scale = mrng.uniform(*cfg.scale_range)
        offset = mrng.uniform(*cfg.offset_range)
        vols[mod.lower()] = (scale * v + offset).astype(np.float32)
    study = Study(
        subject_id or f"sub-{subject_seed & 0xFFFFFFFF:08x}",
        vols["t1"],
        vols["t2"],
        vols["flair"],
        (labels > 0).astype(np.float32),
        (labels == TUMOR).astype(np.float32),
    )
    return study, labels


def subject_seed(cfg: PhantomConfig, index: int) -> int:
    return mix_seed(cfg.seed, index)


def generate_cohort(cfg: PhantomConfig, n_subjects: int, with_labels: bool = False):
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    out = []
    for i in range(n_subjects):
        study, labels = generate_study(cfg, subject_seed(cfg, i), subject_id=f"sub-{i:03d}")
        out.append((study, labels) if with_labels else study)
    return out


def write_cohort(cfg: PhantomConfig, n_subjects: int, directory) -> list[str]:
    """Write every subject in the study directory format plus ``labels.f32``."""
    directory = Path(directory)
    ids = []
    for study, labels in generate_cohort(cfg, n_subjects, with_labels=True):
        sdir = save_study(study, directory / study.subject_id)
        labels.astype("<f4").tofile(sdir / "labels.f32")
        ids.append(study.subject_id)
    return ids

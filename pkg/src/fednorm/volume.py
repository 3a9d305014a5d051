"""Volumes, studies, axial slice extraction, cohort splitting and study I/O.

On disk a study is a directory holding ``meta.json`` and one raw
little-endian float32 file per volume, in (z, y, x) order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn.rng import RngStream

MODALITIES = ("T1", "T2", "FLAIR")
VOLUME_FILES = {
    "t1": "t1.f32",
    "t2": "t2.f32",
    "flair": "flair.f32",
    "brain_mask": "brain_mask.f32",
    "tumor_mask": "tumor_mask.f32",
}


class StudyFormatError(ValueError):
    pass


def _check_volume(name, arr, dims=None, binary=False):
    if arr.ndim != 3:
        raise StudyFormatError(f"{name}: expected a 3D array, got shape {arr.shape}")
    if dims is not None and arr.shape != dims:
        raise StudyFormatError(f"{name}: shape {arr.shape} does not match {dims}")
    if not np.all(np.isfinite(arr)):
        raise StudyFormatError(f"{name}: non-finite voxel values")
    if binary and not np.all((arr == 0) | (arr == 1)):
        raise StudyFormatError(f"{name}: mask not binary")


@dataclass(frozen=True, eq=False)
class Study:
    """One subject: three modality volumes plus brain and tumor masks, all (z, y, x)."""

    subject_id: str
    t1: np.ndarray
    t2: np.ndarray
    flair: np.ndarray
    brain_mask: np.ndarray
    tumor_mask: np.ndarray

    def __post_init__(self):
        for name in VOLUME_FILES:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float32))
        shape = self.t1.shape
        for name in VOLUME_FILES:
            _check_volume(name, getattr(self, name), shape, binary=name.endswith("mask"))
        if np.any((self.tumor_mask > 0) & (self.brain_mask == 0)):
            raise StudyFormatError(f"{self.subject_id}: tumor voxels outside the brain mask")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx)."""
        return self.t1.shape

    @property
    def dims(self) -> tuple[int, int, int]:
        """Header dims (nx, ny, nz)."""
        nz, ny, nx = self.shape
        return nx, ny, nz

    def modality(self, name: str) -> np.ndarray:
        return getattr(self, name.lower())

    def replace(self, **volumes) -> "Study":
        fields = {name: getattr(self, name) for name in VOLUME_FILES}
        fields.update(volumes)
        return Study(self.subject_id, **fields)

    def __eq__(self, other):
        if not isinstance(other, Study):
            return NotImplemented
        return self.subject_id == other.subject_id and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in VOLUME_FILES
        )


def save_study(study: Study, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"subject_id": study.subject_id, "dims": list(study.dims)}
    (directory / "meta.json").write_text(json.dumps(meta), encoding="utf-8")
    for name, fname in VOLUME_FILES.items():
        getattr(study, name).astype("<f4").tofile(directory / fname)
    return directory


def read_raw(path: Path, dims) -> np.ndarray:
    nx, ny, nz = dims
    if not path.exists():
        raise StudyFormatError(f"missing file {path}")
    data = np.fromfile(path, dtype="<f4")
    if data.size != nx * ny * nz:
        raise StudyFormatError(
            f"{path.name}: size mismatch, header dims {tuple(dims)} need {nx * ny * nz} voxels, file has {data.size}"
        )
    return data.reshape(nz, ny, nx).astype(np.float32)


def load_study(directory) -> Study:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise StudyFormatError(f"missing file {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    dims = tuple(int(d) for d in meta["dims"])
    if len(dims) != 3 or min(dims) < 1:
        raise StudyFormatError(f"{meta_path}: invalid dims {meta['dims']}")
    vols = {name: read_raw(directory / fname, dims) for name, fname in VOLUME_FILES.items()}
    return Study(meta["subject_id"], **vols)


@dataclass(frozen=True, eq=False)
class SliceSample:
    subject_id: str
    z_index: int
    input: np.ndarray  # (3, H, W): T1, T2, FLAIR
    target: np.ndarray  # (H, W) binary
    brain_slice: np.ndarray  # (H, W) binary


def keep_slice(brain_pixels: float, tumor_pixels: float, area: int,
               brain_frac: float = 0.20, tumor_frac: float = 0.05) -> bool:
    return brain_pixels >= brain_frac * area or (
        tumor_pixels > 0 and tumor_pixels >= tumor_frac * brain_pixels
    )


def extract_slices(study: Study, brain_frac: float = 0.20, tumor_frac: float = 0.05) -> list[SliceSample]:
    """Axial slices, ascending z, that hold enough brain or enough tumor.

    A slice is kept when its brain pixels reach ``brain_frac`` of the slice
    area, or when its tumor pixels reach ``tumor_frac`` of its brain pixels.
    """
    if not (0 <= brain_frac <= 1 and 0 <= tumor_frac <= 1):
        raise ValueError("filter fractions must lie in [0, 1]")
    nz, ny, nx = study.shape
    brain = study.brain_mask.reshape(nz, -1).sum(axis=1)
    tumor = study.tumor_mask.reshape(nz, -1).sum(axis=1)
    out = []
    for z in range(nz):
        if not keep_slice(brain[z], tumor[z], ny * nx, brain_frac, tumor_frac):
            continue
        x = np.stack([study.t1[z], study.t2[z], study.flair[z]])
        out.append(SliceSample(study.subject_id, z, x, study.tumor_mask[z].copy(), study.brain_mask[z].copy()))
    return out


@dataclass
class SubsetSplit:
    train: list[str]
    test: list[str]
    val: list[str]

    @property
    def ids(self) -> list[str]:
        return self.train + self.test + self.val


@dataclass
class CohortSplit:
    subsets: list[SubsetSplit]
    common_test: list[str]
    seed: int
    common_subset: int = 0
    ratios: tuple[float, float, float] = (0.75, 0.20, 0.05)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "ratios": list(self.ratios),
                "common_subset": self.common_subset,
                "common_test": self.common_test,
                "subsets": [{"train": s.train, "test": s.test, "val": s.val} for s in self.subsets],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "CohortSplit":
        d = json.loads(text)
        return cls(
            subsets=[SubsetSplit(s["train"], s["test"], s["val"]) for s in d["subsets"]],
            common_test=d["common_test"],
            seed=d["seed"],
            common_subset=d["common_subset"],
            ratios=tuple(d["ratios"]),
        )


def subset_counts(n: int, ratios) -> tuple[int, int, int]:
    """(train, test, val) sizes: test is rounded up, val down, train takes the rest.

    With the default ratios this gives 82 -> 61/17/4 and 10 -> 8/2/0.
    """
    _, r_test, r_val = ratios
    # epsilons absorb float noise such as 0.2 * 10 = 2.0000000000000004
    n_test = math.ceil(r_test * n - 1e-9)
    n_val = math.floor(r_val * n + 1e-9)
    return n - n_test - n_val, n_test, n_val


def split_cohort(subject_ids, n_subsets: int = 6, ratios=(0.75, 0.20, 0.05), seed: int = 0,
                 common_subset: int = 0) -> CohortSplit:
    """Shuffle ids by seed, deal them into equal subsets, split each into train/test/val.

    Subsets get ``len(ids) // n_subsets`` subjects each; leftovers are unused.
    The common test set is the test split of ``common_subset``.
    """
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subject ids")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if n_subsets * 3 > len(ids):
        raise ValueError(f"too few subjects: {len(ids)} for {n_subsets} subsets")
    order = RngStream(seed, "split-cohort").permutation(len(ids))
    shuffled = [ids[i] for i in order]
    size = len(ids) // n_subsets
    n_train, n_test, n_val = subset_counts(size, ratios)
    subsets = []
    for k in range(n_subsets):
        chunk = shuffled[k * size:(k + 1) * size]
        subsets.append(SubsetSplit(chunk[:n_train], chunk[n_train:n_train + n_test], chunk[n_train + n_test:]))
    return CohortSplit(subsets, list(subsets[common_subset].test), seed, common_subset, tuple(ratios))

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fednorm.volume import (
    Study, StudyFormatError, extract_slices, keep_slice, load_study, save_study, split_cohort, subset_counts,
)


def tiny_study(sid="s0", shape=(2, 4, 4), seed=0):
    rng = np.random.default_rng(seed)
    brain = np.zeros(shape, np.float32)
    brain[:, 1:3, 1:3] = 1
    tumor = np.zeros(shape, np.float32)
    tumor[0, 1, 1] = 1
    vols = {k: rng.random(shape).astype(np.float32) for k in ("t1", "t2", "flair")}
    return Study(sid, brain_mask=brain, tumor_mask=tumor, **vols)


class TestStudy:
    def test_round_trip_bytes(self, tmp_path):
        s = tiny_study()
        save_study(s, tmp_path / "s0")
        back = load_study(tmp_path / "s0")
        assert back == s
        for name in ("t1", "t2", "flair", "brain_mask", "tumor_mask"):
            assert getattr(back, name).tobytes() == getattr(s, name).tobytes()
        meta = json.loads((tmp_path / "s0" / "meta.json").read_text())
        assert meta == {"subject_id": "s0", "dims": [4, 4, 2]}

    def test_size_mismatch(self, tmp_path):
        d = save_study(tiny_study(), tmp_path / "s0")
        np.zeros(31, "<f4").tofile(d / "t2.f32")
        with pytest.raises(StudyFormatError, match="size mismatch"):
            load_study(d)

    def test_mask_not_binary_on_disk(self, tmp_path):
        d = save_study(tiny_study(), tmp_path / "s0")
        m = np.fromfile(d / "brain_mask.f32", "<f4")
        m[0] = 0.5
        m.tofile(d / "brain_mask.f32")
        with pytest.raises(StudyFormatError, match="mask not binary"):
            load_study(d)

    def test_missing_file(self, tmp_path):
        d = save_study(tiny_study(), tmp_path / "s0")
        (d / "flair.f32").unlink()
        with pytest.raises(StudyFormatError, match="missing"):
            load_study(d)

    def test_tumor_outside_brain(self):
        s = tiny_study()
        bad = s.tumor_mask.copy()
        bad[1, 0, 0] = 1
        with pytest.raises(StudyFormatError, match="outside"):
            s.replace(tumor_mask=bad)

    def test_non_finite(self):
        s = tiny_study()
        t1 = s.t1.copy()
        t1[0, 0, 0] = np.nan
        with pytest.raises(StudyFormatError, match="non-finite"):
            s.replace(t1=t1)

    def test_shape_and_dims(self):
        s = tiny_study(shape=(2, 3, 5))
        assert s.shape == (2, 3, 5) and s.dims == (5, 3, 2)


class TestSliceFilter:
    @pytest.mark.parametrize("brain,tumor,kept", [(820, 0, True), (819, 0, False), (100, 5, True), (100, 4, False)])
    def test_thresholds(self, brain, tumor, kept):
        assert keep_slice(brain, tumor, 64 * 64) is kept

    def test_extract_order_and_channels(self):
        s = tiny_study(shape=(3, 4, 4))
        # 4 of 16 brain pixels = 25% >= 20%, so every slice is kept
        out = extract_slices(s)
        assert [x.z_index for x in out] == [0, 1, 2]
        np.testing.assert_array_equal(out[1].input[2], s.flair[1])
        np.testing.assert_array_equal(out[0].target, s.tumor_mask[0])
        assert np.all(out[0].target <= out[0].brain_slice)

    @given(st.integers(0, 4096), st.integers(0, 4096))
    def test_predicate_partition(self, brain, tumor):
        tumor = min(tumor, brain)
        kept = keep_slice(brain, tumor, 4096)
        a = brain >= 0.2 * 4096
        b = tumor > 0 and tumor >= 0.05 * brain
        assert kept == (a or b)

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            extract_slices(tiny_study(), brain_frac=1.5)


class TestSplit:
    def test_paper_counts(self):
        assert subset_counts(82, (0.75, 0.20, 0.05)) == (61, 17, 4)
        split = split_cohort([f"id{i}" for i in range(492)], 6, seed=3)
        assert all((len(s.train), len(s.test), len(s.val)) == (61, 17, 4) for s in split.subsets)

    def test_desk_counts(self):
        split = split_cohort([f"id{i}" for i in range(60)], 6, seed=0)
        assert all((len(s.train), len(s.test), len(s.val)) == (8, 2, 0) for s in split.subsets)
        assert split.common_test == split.subsets[0].test

    def test_deterministic_and_json(self):
        ids = [f"id{i}" for i in range(60)]
        a, b = split_cohort(ids, seed=5), split_cohort(ids, seed=5)
        assert a.to_json() == b.to_json()
        assert type(a).from_json(a.to_json()).to_json() == a.to_json()
        assert split_cohort(ids, seed=6).to_json() != a.to_json()

    @given(st.integers(18, 200), st.integers(0, 10_000))
    def test_partition(self, n, seed):
        ids = [f"s{i}" for i in range(n)]
        split = split_cohort(ids, 6, seed=seed)
        seen = [i for s in split.subsets for i in s.ids]
        assert len(seen) == len(set(seen))
        assert set(seen) <= set(ids)
        assert len({len(s.ids) for s in split.subsets}) == 1

    def test_too_few(self):
        with pytest.raises(ValueError, match="too few"):
            split_cohort([str(i) for i in range(17)], 6)

    def test_ratios_must_sum(self):
        with pytest.raises(ValueError):
            split_cohort([str(i) for i in range(60)], ratios=(0.5, 0.2, 0.2))

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fednorm.norm import (
    NormalizationError, NormMethod, NyulStandardScale, fcm_fit, normalize_fcm, normalize_minmax,
    normalize_subset, normalize_volume, normalize_whitestripe, normalize_zscore, nyul_apply, nyul_fit,
    whitestripe_interval,
)
from fednorm.norm.fcm import fcm_cluster, fcm_memberships
from fednorm.norm.nyul import landmarks, piecewise_linear
from fednorm.phantom import WM, PhantomConfig, generate_study


def three_tissue(seed=0, n=4000, shape=(10, 20, 20)):
    """A 3-mode volume (means 300/600/900) inside a box brain, zero background."""
    rng = np.random.default_rng(seed)
    vol = np.zeros(shape)
    mask = np.zeros(shape)
    mask[1:-1, 2:-2, 2:-2] = 1
    idx = np.flatnonzero(mask)
    tissue = rng.choice([300.0, 600.0, 900.0], size=idx.size, p=[0.2, 0.3, 0.5])
    vol.flat[idx] = tissue + rng.normal(0, 25, idx.size)
    return vol, mask


class TestMinMax:
    def test_example(self):
        np.testing.assert_allclose(normalize_minmax(np.array([2.0, 4.0, 6.0])), [0, 0.5, 1])

    def test_constant(self):
        with pytest.raises(NormalizationError, match="degenerate range"):
            normalize_minmax(np.full((3, 3), 7.0))

    def test_range_exact(self):
        out = normalize_minmax(np.random.default_rng(1).normal(5, 3, (4, 8, 8)))
        assert abs(out.min()) <= 1e-7 and abs(out.max() - 1) <= 1e-7


class TestZScore:
    def test_example(self):
        out = normalize_zscore(np.array([0.0, 2.0, 4.0]), np.ones(3))
        np.testing.assert_allclose(out, [-1.22474, 0, 1.22474], atol=1e-5)

    def test_idempotent(self):
        vol, mask = three_tissue()
        once = normalize_zscore(vol, mask).astype(np.float64)
        twice = normalize_zscore(once, mask)
        assert np.max(np.abs(twice - once)) < 1e-6

    def test_all_voxels_transformed(self):
        out = normalize_zscore(np.array([0.0, 2.0, 4.0, 10.0]), np.array([1, 1, 1, 0]))
        assert out[3] == pytest.approx((10 - 2) / np.sqrt(8 / 3), rel=1e-6)

    def test_constant_brain(self):
        with pytest.raises(NormalizationError, match="zero variance"):
            normalize_zscore(np.array([1.0, 1.0, 5.0]), np.array([1, 1, 0]))


class TestNyul:
    def test_single_volume_fit_on_self(self):
        vol, mask = three_tissue()
        scale = nyul_fit([(vol, mask)])
        assert scale.positions[0] == 0 and scale.positions[-1] == 100
        out = nyul_apply(vol, mask, scale)
        np.testing.assert_allclose(landmarks(out, mask, scale.grid), scale.positions, atol=1e-4)

    def test_affine_related_volumes(self):
        vol, mask = three_tissue()
        a = nyul_fit([(vol, mask)])
        b = nyul_fit([(vol, mask), (3.5 * vol + 40.0, mask)])
        np.testing.assert_allclose(a.positions, b.positions, atol=1e-9)

    def test_uniform_grid_oracle(self):
        v = np.random.default_rng(0).random(200_000)
        scale = nyul_fit([(v, np.ones_like(v))], grid=(1, 50, 99))
        np.testing.assert_allclose(scale.positions, [0, 50, 100], atol=0.5)

    def test_hand_interpolation(self):
        assert piecewise_linear([30.0], [10, 50, 90], [0, 50, 100])[0] == pytest.approx(25.0)

    def test_extrapolates_end_segments(self):
        out = piecewise_linear([0.0, 100.0], [10, 50, 90], [0, 50, 100])
        np.testing.assert_allclose(out, [-12.5, 112.5])

    def test_unfitted(self):
        vol, mask = three_tissue()
        with pytest.raises(NormalizationError, match="not been fitted"):
            nyul_apply(vol, mask, None)

    def test_flat_landmarks_rejected(self):
        v = np.zeros(1000)
        v[-5:] = 1.0
        with pytest.raises(NormalizationError, match="strictly increasing"):
            nyul_fit([(v, np.ones_like(v))])

    def test_json_round_trip(self):
        vol, mask = three_tissue()
        s = nyul_fit([(vol, mask)], modality="T2")
        back = NyulStandardScale.from_json(s.to_json())
        assert back == s
        assert set(json.loads(s.to_json())) == {"modality", "grid", "positions"}

    def test_pool_spread(self):
        vols = [three_tissue(seed=k) for k in range(3)]
        scale = nyul_fit(vols)
        for vol, mask in vols:
            lm = landmarks(nyul_apply(vol, mask, scale), mask, scale.grid)
            assert np.max(np.abs(lm - scale.positions)) < 2.0


class TestFcm:
    def test_separated_constants(self):
        rng = np.random.default_rng(0)
        x = rng.choice([0.2, 0.5, 0.8], 3000) + rng.normal(0, 1e-3, 3000)
        centers, _ = fcm_cluster(x)
        np.testing.assert_allclose(centers, [0.2, 0.5, 0.8], atol=1e-3)

    def test_zero_distance_membership(self):
        u = fcm_memberships(np.array([0.5, 0.3]), np.array([0.2, 0.5, 0.8]), 2.0)
        np.testing.assert_array_equal(u[0], [0, 1, 0])
        assert u[1].sum() == pytest.approx(1.0)

    def test_c_one(self):
        with pytest.raises(NormalizationError):
            fcm_cluster(np.arange(10.0), c=1)

    def test_non_convergence_reports_iterations(self):
        with pytest.raises(NormalizationError, match="1 iterations"):
            fcm_cluster(np.random.default_rng(0).random(500), max_iter=1)

    def test_scalar_division(self):
        model = fcm_fit(*three_tissue())
        assert normalize_fcm(np.array([model.wm_mean * 1.5]), model)[0] == pytest.approx(1.5)

    def test_wm_mean_on_phantom(self):
        s, labels = generate_study(PhantomConfig(), 0)
        model = fcm_fit(s.t1, s.brain_mask, "T1")
        assert list(model.means) == sorted(model.means)
        out = normalize_fcm(s.t1, model)
        # highest-cluster mean is the WM(+tumor) intensity level
        assert abs(out[labels == WM].mean() - 1.0) < 0.02

    def test_modality_rule(self):
        vol, mask = three_tissue()
        assert fcm_fit(vol, mask, "T1").wm_mean == pytest.approx(900, abs=15)
        assert fcm_fit(vol, mask, "T2").wm_mean == pytest.approx(300, abs=15)
        assert fcm_fit(vol, mask, "FLAIR").wm_mean == pytest.approx(600, abs=15)


class TestWhiteStripe:
    @pytest.mark.parametrize("seed", range(5))
    def test_single_gaussian_mode(self, seed):
        # 1e6 samples: at 5e4 the raw bin counts are noisy enough to move the mode ~3 bins
        v = np.random.default_rng(seed).normal(50.0, 5.0, 1_000_000)
        iv = whitestripe_interval(v, np.ones_like(v), "T2")
        width = (v.max() - v.min()) / 200
        assert abs(iv.mode_intensity - 50.0) < 2 * width
        frac = np.mean((v >= iv.lo) & (v <= iv.hi))
        assert 0.08 <= frac <= 0.12
        assert iv.lo < iv.mode_intensity < iv.hi

    def test_t1_picks_rightmost_mode(self):
        vol, mask = three_tissue()
        assert whitestripe_interval(vol, mask, "T1").mode_intensity == pytest.approx(900, abs=20)

    def test_hand_example(self):
        from fednorm.norm import WhiteStripeInterval

        iv = WhiteStripeInterval(2.0, 0.5, 3.5)
        out = normalize_whitestripe(np.array([1.0, 3.0, 4.0]), iv, np.array([1, 1, 0]))
        assert out[2] == pytest.approx(2.0)

    def test_stripe_statistics(self):
        vol, mask = three_tissue()
        iv = whitestripe_interval(vol, mask, "T1")
        out = normalize_whitestripe(vol, iv, mask).astype(np.float64)
        b, ob = vol[mask > 0], out[mask > 0]
        stripe = ob[(b >= iv.lo) & (b <= iv.hi)]
        assert abs(stripe.mean()) < 1e-5 and abs(stripe.std() - 1) < 1e-5

    def test_empty_stripe(self):
        from fednorm.norm import WhiteStripeInterval

        with pytest.raises(NormalizationError):
            normalize_whitestripe(np.arange(10.0), WhiteStripeInterval(50, 40, 60), np.ones(10))

    def test_too_few_voxels(self):
        with pytest.raises(NormalizationError, match="100"):
            whitestripe_interval(np.arange(50.0), np.ones(50))


VOLUME_METHODS = [NormMethod.MINMAX, NormMethod.ZSCORE, NormMethod.NYUL, NormMethod.FCM, NormMethod.WHITESTRIPE]


def apply(method, vol, mask):
    scales = {"T1": nyul_fit([(vol, mask)], modality="T1")} if method is NormMethod.NYUL else None
    return normalize_volume(vol, mask, "T1", method, scales).astype(np.float64)


class TestProperties:
    @pytest.mark.parametrize("method", VOLUME_METHODS)
    def test_monotone(self, method):
        rng = np.random.default_rng(7)
        vol, mask = three_tissue()
        out = apply(method, vol, mask)
        i, j = rng.integers(0, vol.size, (2, 1000))
        lo = np.where(vol.flat[i] <= vol.flat[j], i, j)
        hi = np.where(vol.flat[i] <= vol.flat[j], j, i)
        # float32 output rounding is the only slack
        assert np.all(out.flat[lo] <= out.flat[hi] + 1e-6 * np.abs(out.flat[hi]))

    @pytest.mark.parametrize("method", [NormMethod.MINMAX, NormMethod.ZSCORE, NormMethod.WHITESTRIPE])
    def test_affine_invariance(self, method):
        rng = np.random.default_rng(11)
        vol, mask = three_tissue()
        ref = apply(method, vol, mask)
        for _ in range(20):
            a, b = rng.uniform(0.1, 10), rng.uniform(-500, 500)
            got = apply(method, a * vol + b, mask)
            assert np.max(np.abs(got - ref)) < 1e-5 * max(1.0, np.abs(ref).max())

    def test_fcm_scale_invariance(self):
        rng = np.random.default_rng(12)
        vol, mask = three_tissue()
        ref = apply(NormMethod.FCM, vol, mask)
        for a in rng.uniform(0.1, 10, 20):
            assert np.max(np.abs(apply(NormMethod.FCM, a * vol, mask) - ref)) < 1e-4

    def test_nyul_affine_invariance_with_fixed_scale(self):
        rng = np.random.default_rng(13)
        vol, mask = three_tissue()
        scale = nyul_fit([three_tissue(seed=1)])
        ref = nyul_apply(vol, mask, scale).astype(np.float64)
        for _ in range(20):
            a, b = rng.uniform(0.1, 10), rng.uniform(-500, 500)
            got = nyul_apply(a * vol + b, mask, scale)
            assert np.max(np.abs(got - ref)) < 1e-3

    @settings(max_examples=30)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([NormMethod.MINMAX, NormMethod.ZSCORE]))
    def test_random_volumes_monotone(self, seed, method):
        rng = np.random.default_rng(seed)
        vol = rng.gamma(2.0, 100.0, (4, 6, 6))
        out = apply(method, vol, np.ones_like(vol))
        order = np.argsort(vol, axis=None, kind="stable")
        assert np.all(np.diff(out.flat[order]) >= -1e-6)


class TestSubset:
    def test_raw_identity_and_masks(self, small_cohort):
        studies = small_cohort[:2]
        assert normalize_subset(studies, NormMethod.RAW) == studies
        for m in VOLUME_METHODS:
            out = normalize_subset(studies, m, fit_pool=studies)
            for s, o in zip(studies, out):
                assert o.shape == s.shape
                np.testing.assert_array_equal(o.brain_mask, s.brain_mask)
                np.testing.assert_array_equal(o.tumor_mask, s.tumor_mask)

    def test_zscore_brain_means(self, small_cohort):
        for s in normalize_subset(small_cohort[:3], NormMethod.ZSCORE):
            for v in (s.t1, s.t2, s.flair):
                assert abs(v[s.brain_mask > 0].astype(np.float64).mean()) < 1e-4

    def test_nyul_train_to_test(self, small_cohort):
        train, test = small_cohort[:5], small_cohort[5]
        (out,) = normalize_subset([test], NormMethod.NYUL, fit_pool=train)
        scale = nyul_fit([(s.t1, s.brain_mask) for s in train])
        lm = landmarks(out.t1, out.brain_mask, scale.grid)
        np.testing.assert_allclose(lm, scale.positions, atol=1e-3)

    def test_nyul_needs_pool(self, small_cohort):
        with pytest.raises(NormalizationError, match="non-empty"):
            normalize_subset(small_cohort[:1], NormMethod.NYUL)

    def test_error_carries_subject_id(self, small_cohort):
        s = small_cohort[0]
        flat = s.replace(t2=np.full(s.shape, 3.0, np.float32))
        with pytest.raises(NormalizationError, match=s.subject_id):
            normalize_subset([flat], NormMethod.ZSCORE)

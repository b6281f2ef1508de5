"""Overlap scores, surface distances, cohort statistics."""

import numpy as np
import pytest

from aneuseg.errors import EmptyMaskError, GeometryError, MetricsError
from aneuseg.metrics import (CaseMetrics, compute_case_metrics,
                             overlap_metrics, pearson_r, surface_distances,
                             surface_voxels, volume_stats)
from aneuseg.volume import LabelMask

from _oracles import (distance_oracle, overlap_oracle, pearson_oracle,
                      random_mask_pair, surface_set)
from conftest import make_mask


def mask_at(shape, coords, spacing=(1.0, 1.0, 1.0)):
    arr = np.zeros(shape, dtype=np.uint8)
    for c in coords:
        arr[c] = 1
    return LabelMask(arr, spacing)


class TestOverlapMetrics:
    def test_identical_nonempty(self):
        m = make_mask((6, 6, 6), (slice(1, 4), slice(2, 5), slice(1, 3)))
        assert overlap_metrics(m, m) == (1.0, 1.0, 1.0, 1.0)

    def test_one_shared_one_private_each(self):
        # pred {v1, v2}, ref {v2, v3}: TP=1 FP=1 FN=1
        pred = mask_at((4, 4, 4), [(0, 0, 0), (1, 1, 1)])
        ref = mask_at((4, 4, 4), [(1, 1, 1), (2, 2, 2)])
        j, d, p, r = overlap_metrics(pred, ref)
        assert j == pytest.approx(1 / 3, abs=1e-15)
        assert d == pytest.approx(1 / 2, abs=1e-15)
        assert p == pytest.approx(1 / 2, abs=1e-15)
        assert r == pytest.approx(1 / 2, abs=1e-15)

    def test_disjoint_nonempty(self):
        pred = mask_at((4, 4, 4), [(0, 0, 0)])
        ref = mask_at((4, 4, 4), [(3, 3, 3)])
        assert overlap_metrics(pred, ref) == (0.0, 0.0, 0.0, 0.0)

    def test_both_empty_scores_one(self):
        e = make_mask((4, 4, 4))
        assert overlap_metrics(e, e) == (1.0, 1.0, 1.0, 1.0)

    def test_empty_pred_nonempty_ref(self):
        pred = make_mask((4, 4, 4))
        ref = mask_at((4, 4, 4), [(1, 1, 1)])
        j, d, p, r = overlap_metrics(pred, ref)
        assert (j, d, r) == (0.0, 0.0, 0.0)
        assert p == 1.0  # no false positives

    def test_precision_recall_swap_symmetry(self, rng):
        for _ in range(20):
            a_arr, b_arr = random_mask_pair(rng)
            a, b = LabelMask(a_arr, (1, 1, 1)), LabelMask(b_arr, (1, 1, 1))
            ja, da, pa, ra = overlap_metrics(a, b)
            jb, db, pb, rb = overlap_metrics(b, a)
            assert (ja, da) == (jb, db)
            assert pa == rb and ra == pb

    def test_dice_jaccard_identity(self, rng):
        for _ in range(50):
            a_arr, b_arr = random_mask_pair(rng)
            a, b = LabelMask(a_arr, (1, 1, 1)), LabelMask(b_arr, (1, 1, 1))
            j, d, _, _ = overlap_metrics(a, b)
            assert abs(d - 2 * j / (1 + j)) < 1e-12

    def test_geometry_mismatch(self):
        with pytest.raises(GeometryError):
            overlap_metrics(make_mask((4, 4, 4)), make_mask((4, 4, 5)))
        with pytest.raises(GeometryError):
            overlap_metrics(make_mask((4, 4, 4), spacing=(1, 1, 1)),
                            make_mask((4, 4, 4), spacing=(1, 1, 2)))


class TestSurfaceVoxels:
    def test_solid_cube_hollow_surface(self):
        arr = np.zeros((5, 5, 5), dtype=np.uint8)
        arr[1:4, 1:4, 1:4] = 1
        surf = surface_voxels(arr)
        assert surf.sum() == 26  # 3^3 minus the single interior voxel
        assert not surf[2, 2, 2]

    def test_grid_boundary_counts_as_background(self):
        arr = np.ones((4, 4, 4), dtype=np.uint8)
        surf = surface_voxels(arr)
        assert surf.sum() == 64 - 8  # interior is the central 2^3 block
        assert surf[0, 0, 0] and not surf[1, 1, 1]

    def test_single_voxel_is_its_own_surface(self):
        arr = np.zeros((3, 3, 3), dtype=np.uint8)
        arr[1, 1, 1] = 1
        assert surface_voxels(arr).sum() == 1

    def test_matches_oracle(self, rng):
        for _ in range(20):
            a_arr, _ = random_mask_pair(rng)
            got = {tuple(int(i) for i in idx) for idx in np.argwhere(surface_voxels(a_arr))}
            assert got == surface_set(a_arr)


class TestSurfaceDistances:
    def test_identical_masks_zero(self):
        m = make_mask((6, 6, 6), (slice(2, 5), slice(2, 5), slice(2, 5)))
        assert surface_distances(m, m) == (0.0, 0.0)

    def test_two_voxels_two_apart_half_mm_spacing(self):
        pred = mask_at((6, 6, 6), [(1, 2, 2)], spacing=(0.5, 0.5, 0.5))
        ref = mask_at((6, 6, 6), [(3, 2, 2)], spacing=(0.5, 0.5, 0.5))
        hd, md = surface_distances(pred, ref)
        assert hd == pytest.approx(1.0, abs=1e-12)
        assert md == pytest.approx(1.0, abs=1e-12)

    def test_asymmetric_three_point_case(self):
        # pred {0}, ref {2, 3} on the x axis, unit spacing:
        # directed pred->ref {2}; ref->pred {2, 3} -> hd 3, mean 7/3
        pred = mask_at((6, 4, 4), [(0, 0, 0)])
        ref = mask_at((6, 4, 4), [(2, 0, 0), (3, 0, 0)])
        hd, md = surface_distances(pred, ref)
        assert hd == pytest.approx(3.0, abs=1e-12)
        assert md == pytest.approx(7.0 / 3.0, abs=1e-12)

    def test_anisotropic_spacing_scales_axes(self):
        pred = mask_at((4, 4, 4), [(0, 0, 0)], spacing=(1.0, 2.0, 3.0))
        ref = mask_at((4, 4, 4), [(0, 1, 0)], spacing=(1.0, 2.0, 3.0))
        hd, md = surface_distances(pred, ref)
        assert hd == pytest.approx(2.0, abs=1e-12)  # one step on the y axis

    def test_symmetry_and_hd_ge_mean(self, rng):
        done = 0
        while done < 15:
            a_arr, b_arr = random_mask_pair(rng)
            if not a_arr.any() or not b_arr.any():
                continue
            a, b = LabelMask(a_arr, (1, 1, 1)), LabelMask(b_arr, (1, 1, 1))
            hd_ab, md_ab = surface_distances(a, b)
            hd_ba, md_ba = surface_distances(b, a)
            assert hd_ab == hd_ba  # max is order-independent
            assert md_ab == pytest.approx(md_ba, abs=1e-12)  # summation order swaps
            assert hd_ab >= md_ab - 1e-12
            done += 1

    def test_translation_invariance(self):
        def shifted(offset):
            pred = np.zeros((12, 12, 12), dtype=np.uint8)
            ref = np.zeros((12, 12, 12), dtype=np.uint8)
            o = offset
            pred[o:o + 2, o:o + 2, o:o + 2] = 1
            ref[o + 1:o + 3, o:o + 2, o:o + 2] = 1
            return (LabelMask(pred, (1, 1, 1)), LabelMask(ref, (1, 1, 1)))

        results = []
        for off in (0, 3, 6):
            p, r = shifted(off)
            results.append((overlap_metrics(p, r), surface_distances(p, r)))
        assert results[0] == results[1] == results[2]

    def test_percentile_variant(self):
        pred = mask_at((8, 4, 4), [(0, 0, 0)])
        ref = mask_at((8, 4, 4), [(2, 0, 0), (6, 0, 0)])
        hd100, _ = surface_distances(pred, ref, hd_percentile=100.0)
        hd50, _ = surface_distances(pred, ref, hd_percentile=50.0)
        assert hd100 == pytest.approx(6.0)
        assert hd50 < hd100

    @pytest.mark.parametrize("pct", [0.0, -5.0, 100.5])
    def test_bad_percentile(self, pct):
        m = mask_at((4, 4, 4), [(1, 1, 1)])
        with pytest.raises(MetricsError):
            surface_distances(m, m, hd_percentile=pct)

    def test_empty_mask_raises(self):
        full = mask_at((4, 4, 4), [(1, 1, 1)])
        empty = make_mask((4, 4, 4))
        for a, b in [(empty, full), (full, empty), (empty, empty)]:
            with pytest.raises(EmptyMaskError):
                surface_distances(a, b)

    def test_matches_dense_oracle(self, rng):
        done = 0
        while done < 25:
            a_arr, b_arr = random_mask_pair(rng)
            if not a_arr.any() or not b_arr.any():
                continue
            spacing = tuple(float(s) for s in rng.uniform(0.3, 2.0, size=3))
            a, b = LabelMask(a_arr, spacing), LabelMask(b_arr, spacing)
            got = surface_distances(a, b)
            want = distance_oracle(a_arr, b_arr, spacing)
            assert got[0] == pytest.approx(want[0], abs=1e-9)
            assert got[1] == pytest.approx(want[1], abs=1e-9)
            done += 1


class TestComputeCaseMetrics:
    def test_full_case(self):
        pred = mask_at((6, 6, 6), [(1, 2, 2)], spacing=(0.5, 0.5, 0.5))
        ref = mask_at((6, 6, 6), [(3, 2, 2)], spacing=(0.5, 0.5, 0.5))
        cm = compute_case_metrics(pred, ref)
        assert cm.jaccard == 0.0 and cm.hausdorff_mm == pytest.approx(1.0)
        assert cm.vol_pred_mm3 == pytest.approx(0.125)  # one 0.5^3 voxel
        assert cm.vol_ref_mm3 == pytest.approx(0.125)

    def test_empty_case_distances_none(self):
        pred = make_mask((4, 4, 4))
        ref = mask_at((4, 4, 4), [(1, 1, 1)])
        cm = compute_case_metrics(pred, ref)
        assert cm.hausdorff_mm is None and cm.mean_distance_mm is None
        assert cm.vol_pred_mm3 == 0.0

    def test_oracle_agreement_overlap(self, rng):
        for _ in range(20):
            a_arr, b_arr = random_mask_pair(rng)
            a, b = LabelMask(a_arr, (1, 1, 1)), LabelMask(b_arr, (1, 1, 1))
            cm = compute_case_metrics(a, b)
            j, d, p, r = overlap_oracle(a_arr, b_arr)
            assert cm.jaccard == pytest.approx(j, abs=1e-12)
            assert cm.dice == pytest.approx(d, abs=1e-12)
            assert cm.precision == pytest.approx(p, abs=1e-12)
            assert cm.recall == pytest.approx(r, abs=1e-12)


def case_with_volumes(vp, vr):
    return CaseMetrics(jaccard=0.5, dice=2 / 3, precision=0.5, recall=1.0,
                       hausdorff_mm=1.0, mean_distance_mm=0.5,
                       vol_pred_mm3=float(vp), vol_ref_mm3=float(vr))


class TestPearson:
    def test_proportional_is_one(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)

    def test_reversed_is_minus_one(self):
        assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_matches_oracle(self, rng):
        xs = rng.normal(size=12).tolist()
        ys = (np.asarray(xs) * 0.5 + rng.normal(size=12)).tolist()
        assert pearson_r(xs, ys) == pytest.approx(pearson_oracle(xs, ys), abs=1e-12)

    def test_errors(self):
        with pytest.raises(MetricsError):
            pearson_r([1.0], [2.0])
        with pytest.raises(MetricsError):
            pearson_r([1, 1, 1], [1, 2, 3])


class TestVolumeStats:
    def test_perfect_predictions(self):
        cases = [case_with_volumes(v, v) for v in (10.0, 20.0, 30.0)]
        cohort = volume_stats(cases)
        assert cohort.volume_bias_mm3 == pytest.approx(0.0)
        assert cohort.volume_pearson_r == pytest.approx(1.0, abs=1e-12)
        assert cohort.n_cases == 3 and cohort.n_distance_cases == 3

    def test_constant_inflation(self):
        cases = [case_with_volumes(v + 10.0, v) for v in (10.0, 20.0, 30.0)]
        cohort = volume_stats(cases)
        assert cohort.volume_bias_mm3 == pytest.approx(10.0)
        assert cohort.volume_pearson_r == pytest.approx(1.0, abs=1e-12)

    def test_closed_form_cases(self):
        up = [case_with_volumes(p, r) for r, p in [(1, 2), (2, 4), (3, 6)]]
        assert volume_stats(up).volume_bias_mm3 == pytest.approx(2.0)
        assert volume_stats(up).volume_pearson_r == pytest.approx(1.0, abs=1e-12)
        down = [case_with_volumes(p, r) for r, p in [(1, 3), (2, 2), (3, 1)]]
        assert volume_stats(down).volume_pearson_r == pytest.approx(-1.0, abs=1e-12)

    def test_constant_sequence_strict_vs_lenient(self):
        cases = [case_with_volumes(5.0, v) for v in (1.0, 2.0, 3.0)]
        with pytest.raises(MetricsError):
            volume_stats(cases, strict=True)
        assert volume_stats(cases, strict=False).volume_pearson_r is None

    def test_distance_means_skip_undefined(self):
        defined = case_with_volumes(1.0, 2.0)
        undefined = CaseMetrics(jaccard=0.0, dice=0.0, precision=1.0, recall=0.0,
                                hausdorff_mm=None, mean_distance_mm=None,
                                vol_pred_mm3=0.0, vol_ref_mm3=3.0)
        cohort = volume_stats([defined, undefined, defined])
        assert cohort.n_distance_cases == 2
        assert cohort.mean_hausdorff_mm == pytest.approx(1.0)
        assert cohort.mean_jaccard == pytest.approx((0.5 + 0.0 + 0.5) / 3)

    def test_empty_list_rejected(self):
        with pytest.raises(MetricsError):
            volume_stats([])

import numpy as np
import pytest
from hypothesis import given, strategies as st

from petquant.components import connected_components
from petquant.detection import (
    DetectionOutcome,
    cohort_summary,
    dice_coefficient,
    f1_score,
    match_lesions,
)
from petquant.volume import LabelMask

from conftest import SPACING_2MM, mask_from_voxels, random_mask, suv_volume

DIMS = (8, 8, 8)


def scan_index(v, dims=DIMS):
    return v[0] + dims[0] * (v[1] + dims[1] * v[2])


def matching_oracle(volume, gt_comps, pred_comps):
    """Brute-force restatement of the hottest-voxel matching rule."""
    pred_sets = [set(map(tuple, c)) for c in pred_comps]
    matches, matched_preds = [], set()
    for gi, comp in enumerate(gt_comps):
        best_v, best_val = None, -np.inf
        for v in sorted(map(tuple, comp), key=scan_index):
            val = float(volume.data[v])
            if val > best_val:
                best_val, best_v = val, v
        for pi, ps in enumerate(pred_sets):
            if best_v in ps:
                matches.append((gi, pi))
                matched_preds.add(pi)
                break
    tp = len(matches)
    return tp, len(pred_comps) - len(matched_preds), len(gt_comps) - tp, matches


def build_case(gt_voxels, pred_voxels, hot=None):
    data = np.ones(DIMS)
    if hot is not None:
        data[hot] = 9.0
    volume = suv_volume(data)
    gt = connected_components(mask_from_voxels(gt_voxels, DIMS)) if gt_voxels else []
    pred = connected_components(mask_from_voxels(pred_voxels, DIMS)) if pred_voxels else []
    return volume, gt, pred


class TestMatchLesions:
    def test_perfect_overlap(self):
        vox = [(1, 1, 1), (2, 1, 1)]
        volume, gt, pred = build_case(vox, vox, hot=(1, 1, 1))
        out = match_lesions(volume, gt, pred)
        assert (out.tp, out.fp, out.fn) == (1, 0, 0)
        assert out.matches == ((0, 0),)

    def test_overlap_missing_hottest_voxel_is_fn_plus_fp(self):
        volume, gt, pred = build_case(
            [(1, 1, 1), (2, 1, 1)], [(2, 1, 1), (3, 1, 1)], hot=(1, 1, 1)
        )
        out = match_lesions(volume, gt, pred)
        assert (out.tp, out.fp, out.fn) == (0, 1, 1)

    def test_unmatched_prediction_is_fp(self):
        volume, gt, pred = build_case([], [(4, 4, 4)])
        out = match_lesions(volume, gt, pred)
        assert (out.tp, out.fp, out.fn) == (0, 1, 0)

    def test_missed_lesion_is_fn(self):
        volume, gt, pred = build_case([(1, 1, 1)], [])
        out = match_lesions(volume, gt, pred)
        assert (out.tp, out.fp, out.fn) == (0, 0, 1)

    def test_suv_tie_breaks_to_scan_order(self):
        # both gt voxels share the SUV value; the scan-earlier one decides
        volume, gt, _ = build_case([(1, 1, 1), (2, 1, 1)], [])
        covers_first = connected_components(mask_from_voxels([(1, 1, 1)], DIMS))
        covers_second = connected_components(mask_from_voxels([(2, 1, 1)], DIMS))
        assert match_lesions(volume, gt, covers_first).tp == 1
        assert match_lesions(volume, gt, covers_second).tp == 0

    def test_one_prediction_may_detect_two_lesions(self):
        gt_voxels = [(1, 1, 1), (5, 1, 1)]
        pred_voxels = [(i, 1, 1) for i in range(1, 6)]
        volume, gt, pred = build_case(gt_voxels, pred_voxels)
        assert len(gt) == 2 and len(pred) == 1
        out = match_lesions(volume, gt, pred)
        assert (out.tp, out.fp, out.fn) == (2, 0, 0)
        assert out.matches == ((0, 0), (1, 0))

    def test_out_of_bounds_lesion_rejected(self):
        volume, gt, _ = build_case([(1, 1, 1)], [])
        from petquant.components import Lesion
        bad = [Lesion(voxels=np.array([[7, 7, 8]]), spacing=SPACING_2MM)]
        with pytest.raises(ValueError, match="bounds"):
            match_lesions(volume, gt, bad)

    @pytest.mark.parametrize("seed", range(8))
    def test_randomized_against_oracle(self, seed):
        rng = np.random.default_rng(seed)
        volume = suv_volume(rng.uniform(0, 12, size=DIMS))
        gt_mask = random_mask(rng, DIMS, fill=0.15)
        pred_mask = random_mask(rng, DIMS, fill=0.15)
        gt = connected_components(gt_mask)
        pred = connected_components(pred_mask)
        out = match_lesions(volume, gt, pred)
        tp, fp, fn, matches = matching_oracle(
            volume, [l.voxels for l in gt], [l.voxels for l in pred]
        )
        assert (out.tp, out.fp, out.fn) == (tp, fp, fn)
        assert list(out.matches) == matches
        # bookkeeping invariants
        assert out.tp + out.fn == len(gt)
        assert out.tp <= max(len(pred), out.tp)

    def test_deterministic(self, rng):
        volume = suv_volume(rng.uniform(0, 12, size=DIMS))
        gt = connected_components(random_mask(rng, DIMS, fill=0.2))
        pred = connected_components(random_mask(rng, DIMS, fill=0.2))
        assert match_lesions(volume, gt, pred) == match_lesions(volume, gt, pred)


class TestF1Score:
    def test_perfect(self):
        assert f1_score(DetectionOutcome(1, 0, 0, ((0, 0),))) == 1.0

    def test_two_thirds(self):
        assert f1_score(DetectionOutcome(2, 1, 1, ((0, 0), (1, 1)))) == pytest.approx(2 / 3)

    def test_zero_numerator(self):
        assert f1_score(DetectionOutcome(0, 3, 2, ())) == 0.0

    def test_undefined_when_all_zero(self):
        assert f1_score(DetectionOutcome(0, 0, 0, ())) is None

    @given(st.integers(1, 20), st.integers(0, 20), st.integers(0, 20))
    def test_monotone_in_errors(self, tp, fp, fn):
        base = f1_score(DetectionOutcome(tp, fp, fn, ()))
        assert f1_score(DetectionOutcome(tp, fp + 1, fn, ())) <= base
        assert f1_score(DetectionOutcome(tp, fp, fn + 1, ())) <= base


class TestDice:
    def test_identical(self, rng):
        m = random_mask(rng, DIMS, fill=0.3)
        assert dice_coefficient(m, m) == 1.0

    def test_disjoint(self):
        a = mask_from_voxels([(0, 0, 0)], DIMS)
        b = mask_from_voxels([(4, 4, 4)], DIMS)
        assert dice_coefficient(a, b) == 0.0

    def test_half_overlap(self):
        a = mask_from_voxels([(i, 0, 0) for i in range(8)], DIMS)
        b = mask_from_voxels([(i, 0, 0) for i in range(4)] + [(i, 4, 4) for i in range(4)], DIMS)
        assert dice_coefficient(a, b) == 0.5

    def test_both_empty_is_one(self):
        e = LabelMask(data=np.zeros(DIMS, dtype=np.uint8), spacing=SPACING_2MM)
        assert dice_coefficient(e, e) == 1.0

    def test_symmetric(self, rng):
        a = random_mask(rng, DIMS, fill=0.3)
        b = random_mask(rng, DIMS, fill=0.3)
        assert dice_coefficient(a, b) == dice_coefficient(b, a)

    def test_grid_mismatch(self, rng):
        a = random_mask(rng, DIMS)
        b = random_mask(rng, (8, 8, 9))
        with pytest.raises(ValueError, match="grid"):
            dice_coefficient(a, b)


class TestCohortSummary:
    def test_singleton(self):
        s = cohort_summary([0.5])
        assert (s.mean, s.median, s.std) == (0.5, 0.5, 0.0)
        assert s.iqr == (0.5, 0.5)

    def test_linear_interpolation_quartiles(self):
        s = cohort_summary([1.0, 2.0, 3.0, 4.0])
        assert s.median == 2.5
        assert s.iqr == (1.75, 3.25)

    def test_against_statistics_module(self):
        import statistics
        rng = np.random.default_rng(57)
        values = list(rng.uniform(0, 1, size=57))
        s = cohort_summary(values)
        assert s.mean == pytest.approx(statistics.fmean(values), abs=1e-9)
        assert s.median == pytest.approx(statistics.median(values), abs=1e-9)
        assert s.std == pytest.approx(statistics.pstdev(values), abs=1e-9)
        q = statistics.quantiles(values, n=4, method="inclusive")
        assert s.iqr[0] == pytest.approx(q[0], abs=1e-9)
        assert s.iqr[1] == pytest.approx(q[2], abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cohort_summary([])

import numpy as np
import pytest

from lesionkit import (
    BinaryMask,
    GridMismatchError,
    MetricReport,
    ValidationError,
    aggregate,
    dice,
    evaluate_case,
    hausdorff95,
    lesion_f1,
    simple_lesion_count,
    volume_difference,
)
from lesionkit.metrics import boundary_voxels
from helpers import random_dims, random_mask, random_nonempty_mask, random_spacing
from oracles import brute_hd95, brute_lesion_f1


def mask_of(data, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    return BinaryMask(np.asarray(data, np.uint8), spacing)


def empty(dims=(4, 4, 4), spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    return BinaryMask(np.zeros(dims, np.uint8), spacing)


def single_voxel(dims, voxel, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    data = np.zeros(dims, np.uint8)
    data[voxel] = 1
    return BinaryMask(data, spacing)


class TestDice:
    def test_identical_nonempty(self):
        rng = np.random.default_rng(61)
        m = random_nonempty_mask(rng, (6, 6, 6))
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        a = single_voxel((4, 4, 4), (0, 0, 0))
        b = single_voxel((4, 4, 4), (3, 3, 3))
        assert dice(a, b) == 0.0

    def test_partial_overlap_value(self):
        a = np.zeros((8, 4, 4), np.uint8)
        a[0:2, 0:2, 0:2] = 1  # 8 voxels
        b = np.zeros((8, 4, 4), np.uint8)
        b[0:2, 0:2, 0:1] = 1  # 4 voxels, all inside a
        value = dice(mask_of(a), mask_of(b))
        assert abs(value - 2 * 4 / 12) < 1e-12

    def test_both_empty(self):
        assert dice(empty(), empty()) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(62)
        a = random_mask(rng, (6, 6, 6))
        b = random_mask(rng, (6, 6, 6))
        assert dice(a, b) == dice(b, a)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            dice(empty((4, 4, 4)), empty((4, 4, 5)))


class TestLesionF1:
    def test_identical_single_component(self):
        m = single_voxel((4, 4, 4), (1, 1, 1))
        assert lesion_f1(m, m, 26) == 1.0

    def test_tp_fp_fn_case(self):
        # gt has components A and B; pred hits A and adds a false positive.
        gt = np.zeros((10, 1, 1), np.uint8)
        gt[0] = 1   # component A
        gt[4] = 1   # component B
        pred = np.zeros((10, 1, 1), np.uint8)
        pred[0] = 1  # overlaps A
        pred[8] = 1  # overlaps nothing
        assert lesion_f1(mask_of(pred), mask_of(gt), 26) == 0.5

    def test_both_empty(self):
        assert lesion_f1(empty(), empty(), 26) == 1.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(63)
        for connectivity in (6, 26):
            for _ in range(30):
                dims = random_dims(rng, 10)
                a = random_mask(rng, dims, float(rng.uniform(0.02, 0.3)))
                b = random_mask(rng, dims, float(rng.uniform(0.02, 0.3)))
                value = lesion_f1(a, b, connectivity)
                oracle = brute_lesion_f1(
                    np.asarray(a.data), np.asarray(b.data), connectivity
                )
                assert value == oracle.value


class TestSimpleLesionCount:
    def test_equal_counts(self):
        m = single_voxel((4, 4, 4), (1, 1, 1))
        assert simple_lesion_count(m, m, 26) == 0

    def test_three_vs_five(self):
        pred = np.zeros((10, 1, 1), np.uint8)
        pred[[0, 2, 4]] = 1
        gt = np.zeros((10, 1, 1), np.uint8)
        gt[[0, 2, 4, 6, 8]] = 1
        assert simple_lesion_count(mask_of(pred), mask_of(gt), 26) == 2

    def test_empty_pred(self):
        gt = np.zeros((10, 1, 1), np.uint8)
        gt[[0, 2, 4, 6]] = 1
        assert simple_lesion_count(empty((10, 1, 1)), mask_of(gt), 26) == 4

    def test_symmetric(self):
        rng = np.random.default_rng(64)
        a = random_mask(rng, (6, 6, 6))
        b = random_mask(rng, (6, 6, 6))
        assert simple_lesion_count(a, b, 26) == simple_lesion_count(b, a, 26)


class TestVolumeDifference:
    def test_identical(self):
        rng = np.random.default_rng(65)
        m = random_mask(rng, (6, 6, 6))
        assert volume_difference(m, m) == 0

    def test_values(self):
        a = np.zeros((10, 10, 10), np.uint8)
        a.ravel()[:120] = 1
        b = np.zeros((10, 10, 10), np.uint8)
        b.ravel()[:100] = 1
        assert volume_difference(mask_of(a), mask_of(b)) == 20

    def test_empty_pred(self):
        gt = np.zeros((5, 5, 5), np.uint8)
        gt.ravel()[:57] = 1
        assert volume_difference(empty((5, 5, 5)), mask_of(gt)) == 57

    def test_mm3_conversion(self):
        a = single_voxel((4, 4, 4), (0, 0, 0), spacing=(2.0, 1.0, 0.5))
        b = empty((4, 4, 4), spacing=(2.0, 1.0, 0.5))
        assert volume_difference(a, b) == 1
        assert volume_difference(a, b, mm3=True) == pytest.approx(1.0)

    def test_symmetric(self):
        rng = np.random.default_rng(66)
        a = random_mask(rng, (6, 6, 6))
        b = random_mask(rng, (6, 6, 6))
        assert volume_difference(a, b) == volume_difference(b, a)


class TestBoundary:
    def test_solid_block_boundary_is_shell(self):
        data = np.zeros((5, 5, 5), np.uint8)
        data[1:4, 1:4, 1:4] = 1
        b = boundary_voxels(mask_of(data))
        assert int(b.sum()) == 26  # 27-voxel cube minus its center

    def test_grid_edge_counts_as_background(self):
        b = boundary_voxels(mask_of(np.ones((3, 3, 3), np.uint8)))
        assert int(b.sum()) == 26  # all but the center voxel


class TestHausdorff95:
    def test_identical_masks(self):
        rng = np.random.default_rng(67)
        m = random_nonempty_mask(rng, (6, 6, 6))
        assert hausdorff95(m, m) == 0.0

    def test_single_voxels_distance(self):
        a = single_voxel((5, 1, 1), (0, 0, 0))
        b = single_voxel((5, 1, 1), (3, 0, 0))
        assert hausdorff95(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_spacing_scaled(self):
        a = single_voxel((5, 1, 1), (0, 0, 0), spacing=(2.0, 1.0, 1.0))
        b = single_voxel((5, 1, 1), (3, 0, 0), spacing=(2.0, 1.0, 1.0))
        assert hausdorff95(a, b) == pytest.approx(6.0, abs=1e-12)

    def test_undefined_when_either_empty(self):
        rng = np.random.default_rng(68)
        m = random_nonempty_mask(rng, (4, 4, 4))
        assert hausdorff95(m, empty()) is None
        assert hausdorff95(empty(), m) is None
        assert hausdorff95(empty(), empty()) is None

    def test_symmetric(self):
        rng = np.random.default_rng(69)
        for _ in range(10):
            dims = random_dims(rng, 8)
            spacing = random_spacing(rng)
            a = random_nonempty_mask(rng, dims, spacing=spacing)
            b = random_nonempty_mask(rng, dims, spacing=spacing)
            assert hausdorff95(a, b) == hausdorff95(b, a)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(70)
        for _ in range(30):
            dims = random_dims(rng, 8)
            spacing = random_spacing(rng)
            a = random_nonempty_mask(rng, dims, spacing=spacing)
            b = random_nonempty_mask(rng, dims, spacing=spacing)
            value = hausdorff95(a, b)
            oracle = brute_hd95(np.asarray(a.data), np.asarray(b.data), spacing)
            assert value == pytest.approx(oracle.value, abs=1e-9)

    def test_pooled_at_most_full_hausdorff(self):
        rng = np.random.default_rng(71)
        for _ in range(10):
            dims = random_dims(rng, 8)
            a = random_nonempty_mask(rng, dims)
            b = random_nonempty_mask(rng, dims)
            spacing = np.asarray(a.spacing)
            pa = np.argwhere(boundary_voxels(a)) * spacing
            pb = np.argwhere(boundary_voxels(b)) * spacing
            from scipy.spatial import cKDTree

            full = max(
                cKDTree(pb).query(pa)[0].max(), cKDTree(pa).query(pb)[0].max()
            )
            assert hausdorff95(a, b) <= full + 1e-12

    def test_max_directed_variant(self):
        a = single_voxel((5, 1, 1), (0, 0, 0))
        b = single_voxel((5, 1, 1), (3, 0, 0))
        assert hausdorff95(a, b, variant="max_directed") == pytest.approx(3.0)
        with pytest.raises(ValidationError):
            hausdorff95(a, b, variant="nope")


class TestEvaluateCase:
    def test_composes_all_metrics(self):
        gt = np.zeros((10, 4, 4), np.uint8)
        gt[0:2, 0:2, 0:2] = 1
        gt[6, 0, 0] = 1
        pred = np.zeros((10, 4, 4), np.uint8)
        pred[0:2, 0:2, 0:2] = 1
        report = evaluate_case(mask_of(pred), mask_of(gt), 26)
        assert report.pred_components == 1
        assert report.gt_components == 2
        assert report.slc == 1
        assert report.vd == 1
        assert report.dice == pytest.approx(2 * 8 / (8 + 9))
        assert report.lesion_f1 == pytest.approx(2 / 3)  # TP=1, FN=1, FP=0
        assert report.hd95 is not None

    def test_empty_pair_conventions(self):
        report = evaluate_case(empty(), empty(), 26)
        assert report.dice == 1.0
        assert report.lesion_f1 == 1.0
        assert report.slc == 0
        assert report.vd == 0
        assert report.hd95 is None


class TestAggregate:
    def _report(self, **kwargs):
        base = dict(
            dice=1.0, lesion_f1=1.0, slc=0, vd=0, hd95=0.0,
            pred_components=1, gt_components=1,
        )
        base.update(kwargs)
        return MetricReport(**base)

    def test_singleton(self):
        agg = aggregate([self._report(dice=0.7)])
        assert agg.subjects == 1
        assert agg.dice.mean == 0.7
        assert agg.dice.std == 0.0
        assert agg.dice.count == 1

    def test_two_point_statistics(self):
        agg = aggregate([self._report(dice=0.5), self._report(dice=0.7)])
        assert agg.dice.mean == pytest.approx(0.6, abs=1e-15)
        assert agg.dice.std == pytest.approx(0.1, abs=1e-15)  # population std

    def test_undefined_hd95_skipped_and_counted(self):
        agg = aggregate([self._report(hd95=2.0), self._report(hd95=None)])
        assert agg.hd95.count == 1
        assert agg.hd95.mean == 2.0
        assert agg.hd95_undefined == 1

    def test_all_hd95_undefined(self):
        agg = aggregate([self._report(hd95=None)])
        assert agg.hd95.count == 0
        assert agg.hd95.mean is None
        assert agg.hd95.std is None
        assert agg.hd95_undefined == 1

    def test_empty_list_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([])

    def test_order_insensitive(self):
        reports = [self._report(dice=d, vd=i) for i, d in enumerate((0.2, 0.9, 0.5))]
        fwd = aggregate(reports)
        rev = aggregate(list(reversed(reports)))
        assert fwd == rev

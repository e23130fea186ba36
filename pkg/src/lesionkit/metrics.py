"""Segmentation evaluation metrics and per-cohort aggregation.

Implemented metrics:

* ``dice``              2|P∩G| / (|P| + |G|), with dice(∅, ∅) = 1.
* ``lesion_f1``         detection-style F1 over connected components.
* ``simple_lesion_count``  |#components(P) − #components(G)|.
* ``volume_difference``    |foreground(P) − foreground(G)| in voxels.
* ``hausdorff95``       95th percentile of pooled boundary-to-boundary
                        Euclidean distances in mm; undefined (None) when
                        either mask is empty.

Component metrics take the neighborhood (6/18/26) as a parameter. Boundary
extraction for distances always uses the 6-neighborhood, with the grid edge
counting as background; distances are measured between voxel centers scaled
by the first argument's spacing. Percentiles interpolate linearly between
the two closest order statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .components import label_components
from .errors import ValidationError
from .volume import BinaryMask, foreground_count, require_compatible

HD95_VARIANTS = ("pooled", "max_directed")


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """Overlap score 2|P∩G| / (|P| + |G|); both masks empty gives 1.0."""
    require_compatible(pred, gt)
    p = pred.data != 0
    g = gt.data != 0
    total = int(np.count_nonzero(p)) + int(np.count_nonzero(g))
    if total == 0:
        return 1.0
    intersection = int(np.count_nonzero(p & g))
    return 2.0 * intersection / total


def _detection_counts(pred: BinaryMask, gt: BinaryMask, connectivity: int):
    """(tp, fp, fn, pred_count, gt_count) for component-level detection."""
    pred_cs = label_components(pred, connectivity)
    gt_cs = label_components(gt, connectivity)
    pred_fg = pred.data != 0
    gt_fg = gt.data != 0

    # A gt component counts as detected if any predicted voxel falls inside it.
    hit_gt = np.unique(gt_cs.labels[pred_fg])
    tp = int(np.count_nonzero(hit_gt))
    fn = gt_cs.count - tp

    hit_pred = np.unique(pred_cs.labels[gt_fg])
    fp = pred_cs.count - int(np.count_nonzero(hit_pred))
    return tp, fp, fn, pred_cs.count, gt_cs.count


def lesion_f1(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26) -> float:
    """Component-detection F1 = 2TP / (2TP + FP + FN); vacuous case gives 1.0."""
    require_compatible(pred, gt)
    tp, fp, fn, _, _ = _detection_counts(pred, gt, connectivity)
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def simple_lesion_count(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26) -> int:
    """Absolute difference between predicted and true component counts."""
    require_compatible(pred, gt)
    return abs(
        label_components(pred, connectivity).count
        - label_components(gt, connectivity).count
    )


def volume_difference(pred: BinaryMask, gt: BinaryMask, mm3: bool = False) -> int | float:
    """Absolute foreground-volume difference, in voxels (or mm³ with ``mm3``)."""
    require_compatible(pred, gt)
    diff = abs(foreground_count(pred) - foreground_count(gt))
    if mm3:
        sx, sy, sz = pred.spacing
        return diff * sx * sy * sz
    return diff


_SIX_NEIGHBORHOOD = ndimage.generate_binary_structure(3, 1)


def boundary_voxels(m: BinaryMask) -> np.ndarray:
    """Boolean grid of foreground voxels with a background 6-neighbor.

    The grid edge counts as background, so the outermost foreground layer is
    always part of the boundary.
    """
    fg = m.data != 0
    interior = ndimage.binary_erosion(fg, structure=_SIX_NEIGHBORHOOD, border_value=0)
    return fg & ~interior


def _percentile(values: np.ndarray, q: float) -> float:
    return float(np.percentile(values, q, method="linear"))


def hausdorff95(pred: BinaryMask, gt: BinaryMask, variant: str = "pooled") -> float | None:
    """95th-percentile boundary distance in mm, or None if either mask is empty.

    ``variant="pooled"`` merges both directed distance sets before taking the
    percentile; ``variant="max_directed"`` takes the larger of the two
    directed percentiles.
    """
    if variant not in HD95_VARIANTS:
        raise ValidationError(f"variant must be one of {HD95_VARIANTS}, got {variant!r}")
    require_compatible(pred, gt)
    if foreground_count(pred) == 0 or foreground_count(gt) == 0:
        return None

    spacing = np.asarray(pred.spacing, dtype=np.float64)
    pred_pts = np.argwhere(boundary_voxels(pred)) * spacing
    gt_pts = np.argwhere(boundary_voxels(gt)) * spacing

    d_pred_to_gt = cKDTree(gt_pts).query(pred_pts)[0]
    d_gt_to_pred = cKDTree(pred_pts).query(gt_pts)[0]

    if variant == "pooled":
        return _percentile(np.concatenate([d_pred_to_gt, d_gt_to_pred]), 95.0)
    return max(_percentile(d_pred_to_gt, 95.0), _percentile(d_gt_to_pred, 95.0))


@dataclass(frozen=True)
class MetricReport:
    """Per-subject values of the five metrics plus component counts."""

    dice: float
    lesion_f1: float
    slc: int
    vd: int
    hd95: float | None
    pred_components: int
    gt_components: int


def evaluate_case(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26) -> MetricReport:
    """Compute all five metrics for one prediction/ground-truth pair."""
    require_compatible(pred, gt)
    tp, fp, fn, pred_count, gt_count = _detection_counts(pred, gt, connectivity)
    denom = 2 * tp + fp + fn
    return MetricReport(
        dice=dice(pred, gt),
        lesion_f1=1.0 if denom == 0 else 2.0 * tp / denom,
        slc=abs(pred_count - gt_count),
        vd=volume_difference(pred, gt),
        hd95=hausdorff95(pred, gt),
        pred_components=pred_count,
        gt_components=gt_count,
    )


@dataclass(frozen=True)
class MetricSummary:
    """Mean and population standard deviation over the defined values."""

    mean: float | None
    std: float | None
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "count": self.count}


@dataclass(frozen=True)
class AggregateReport:
    """Cohort-level mean±std per metric; hd95 covers defined values only."""

    subjects: int
    dice: MetricSummary
    lesion_f1: MetricSummary
    slc: MetricSummary
    vd: MetricSummary
    hd95: MetricSummary
    hd95_undefined: int

    def to_dict(self) -> dict:
        return {
            "subjects": self.subjects,
            "dice": self.dice.to_dict(),
            "lesion_f1": self.lesion_f1.to_dict(),
            "slc": self.slc.to_dict(),
            "vd": self.vd.to_dict(),
            "hd95": self.hd95.to_dict(),
            "hd95_undefined": self.hd95_undefined,
        }


def _summarize(values) -> MetricSummary:
    if len(values) == 0:
        return MetricSummary(mean=None, std=None, count=0)
    # Sorted reduction keeps the result independent of report order.
    ordered = np.sort(np.asarray(values, dtype=np.float64), kind="stable")
    return MetricSummary(
        mean=float(np.mean(ordered)),
        std=float(np.std(ordered)),
        count=len(values),
    )


def aggregate(reports) -> AggregateReport:
    """Mean and population std per metric over one or more case reports."""
    reports = list(reports)
    if not reports:
        raise ValidationError("at least one metric report is required")
    defined_hd = [r.hd95 for r in reports if r.hd95 is not None]
    return AggregateReport(
        subjects=len(reports),
        dice=_summarize([r.dice for r in reports]),
        lesion_f1=_summarize([r.lesion_f1 for r in reports]),
        slc=_summarize([r.slc for r in reports]),
        vd=_summarize([r.vd for r in reports]),
        hd95=_summarize(defined_hd),
        hd95_undefined=len(reports) - len(defined_hd),
    )

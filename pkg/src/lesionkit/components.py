"""3-D connected-component labeling and per-component statistics.

Labeling is deterministic: components are numbered 1..k in ascending order
of their first voxel in the canonical scan order (x fastest, then y, then z),
independent of the internal labeling algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import GridMismatchError, ValidationError
from .volume import SPACING_RTOL, BinaryMask, ProbabilityMap

CONNECTIVITIES = (6, 18, 26)

# scipy structuring-element rank for each 3-D neighborhood
_RANK = {6: 1, 18: 2, 26: 3}


def neighborhood_structure(connectivity: int) -> np.ndarray:
    """3x3x3 boolean structuring element for a {6, 18, 26} neighborhood."""
    if connectivity not in CONNECTIVITIES:
        raise ValidationError(
            f"connectivity must be one of {CONNECTIVITIES}, got {connectivity!r}"
        )
    return ndimage.generate_binary_structure(3, _RANK[connectivity])


@dataclass(frozen=True)
class ComponentStats:
    """Per-component voxel count, inclusive bounding box, optional peak value."""

    label: int
    size: int
    bbox: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    peak_probability: float | None = None


@dataclass(frozen=True)
class ComponentSet:
    """Connected-component labeling of a mask plus per-component statistics.

    ``labels`` assigns 0 to background and 1..count to the components on the
    same grid (dims/spacing) as the source mask.
    """

    labels: np.ndarray
    count: int
    stats: tuple[ComponentStats, ...]
    connectivity: int
    spacing: tuple[float, float, float]

    def sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.stats)


def _require_same_grid(cs: ComponentSet, v) -> None:
    if cs.labels.shape != v.dims:
        raise GridMismatchError(
            f"incompatible grids (dims {cs.labels.shape} != {v.dims})"
        )
    for name, sa, sb in zip(("sx", "sy", "sz"), cs.spacing, v.spacing):
        if not math.isclose(sa, sb, rel_tol=SPACING_RTOL, abs_tol=0.0):
            raise GridMismatchError(f"incompatible grids ({name}: {sa!r} != {sb!r})")


def label_components(m: BinaryMask, connectivity: int = 26) -> ComponentSet:
    """Label maximal connected foreground regions of ``m``.

    Components are renumbered so that label order follows the canonical scan
    order of each component's first voxel, making the numbering a pure
    function of the mask and connectivity.
    """
    structure = neighborhood_structure(connectivity)
    raw, n = ndimage.label(m.data != 0, structure=structure)

    if n == 0:
        labels = np.zeros(m.dims, dtype=np.int32)
        labels.setflags(write=False)
        return ComponentSet(labels, 0, (), connectivity, m.spacing)

    # Renumber by first occurrence in x-fastest scan order.
    flat = raw.ravel(order="F")
    values, first_pos = np.unique(flat, return_index=True)
    nonzero = values != 0
    old_labels = values[nonzero]
    order = np.argsort(first_pos[nonzero], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[old_labels[order]] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]

    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    boxes = ndimage.find_objects(labels)
    stats = tuple(
        ComponentStats(
            label=i + 1,
            size=int(sizes[i]),
            bbox=tuple((sl.start, sl.stop - 1) for sl in boxes[i]),
        )
        for i in range(n)
    )
    labels.setflags(write=False)
    return ComponentSet(labels, n, stats, connectivity, m.spacing)


def annotate_peaks(cs: ComponentSet, p: ProbabilityMap) -> ComponentSet:
    """Attach each component's maximum probability over its voxels."""
    _require_same_grid(cs, p)
    if cs.count == 0:
        return cs
    peaks = ndimage.maximum(p.data, labels=cs.labels, index=np.arange(1, cs.count + 1))
    peaks = np.atleast_1d(peaks)
    stats = tuple(
        replace(s, peak_probability=float(peaks[i])) for i, s in enumerate(cs.stats)
    )
    return ComponentSet(cs.labels, cs.count, stats, cs.connectivity, cs.spacing)


def remove_components(m: BinaryMask, cs: ComponentSet, ids) -> BinaryMask:
    """Zero out the voxels of the listed component labels.

    ``cs`` must be a labeling of ``m``; unknown labels are rejected.
    """
    ids = sorted({int(i) for i in ids})
    unknown = [i for i in ids if not 1 <= i <= cs.count]
    if unknown:
        raise ValidationError(
            f"unknown component label(s) {unknown}; valid labels are 1..{cs.count}"
        )
    if cs.labels.shape != m.dims or not np.array_equal(cs.labels != 0, m.data != 0):
        raise ValidationError("component set was not derived from this mask")
    if not ids:
        return m
    data = np.where(np.isin(cs.labels, ids), np.uint8(0), m.data)
    return BinaryMask(data, m.spacing, m.affine)

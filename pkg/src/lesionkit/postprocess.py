"""Two-branch probability-map cleanup.

Small cases (total predicted foreground at or below a cutoff) keep only the
connected components whose peak probability reaches a floor; larger cases
are re-thresholded at a higher cut, which splits weakly connected regions.
Probability comparisons happen at the map's 32-bit precision, so a component
whose peak equals float32(floor) is retained (elimination is strictly
"peak < floor").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import CONNECTIVITIES, annotate_peaks, label_components, remove_components
from .errors import ValidationError
from .volume import BinaryMask, ProbabilityMap, foreground_count, threshold

SMALL_BRANCH = "small"
LARGE_BRANCH = "large"


@dataclass(frozen=True)
class PostprocessParams:
    """Tunable thresholds of the cleanup strategy (defaults are the working set)."""

    base_threshold: float = 0.5
    high_threshold: float = 0.55
    min_peak_probability: float = 0.7
    small_case_cutoff: int = 5000
    connectivity: int = 26

    def __post_init__(self):
        if not 0.0 <= self.base_threshold <= self.high_threshold <= 1.0:
            raise ValidationError(
                "thresholds must satisfy 0 <= base_threshold <= high_threshold <= 1, "
                f"got base={self.base_threshold}, high={self.high_threshold}"
            )
        if not 0.0 <= self.min_peak_probability <= 1.0:
            raise ValidationError(
                f"min_peak_probability must lie in [0, 1], got {self.min_peak_probability}"
            )
        if self.small_case_cutoff < 0:
            raise ValidationError(
                f"small_case_cutoff must be >= 0, got {self.small_case_cutoff}"
            )
        if self.connectivity not in CONNECTIVITIES:
            raise ValidationError(
                f"connectivity must be one of {CONNECTIVITIES}, got {self.connectivity!r}"
            )


@dataclass(frozen=True)
class RemovedComponent:
    label: int
    size: int
    peak_probability: float


@dataclass(frozen=True)
class PostprocessReport:
    """What the cleanup did: branch taken, component and voxel bookkeeping."""

    branch: str
    components_before: int
    components_after: int
    removed_components: tuple[RemovedComponent, ...]
    foreground_before: int
    foreground_after: int

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "components_before": self.components_before,
            "components_after": self.components_after,
            "removed_components": [
                {
                    "label": r.label,
                    "size": r.size,
                    "peak_probability": r.peak_probability,
                }
                for r in self.removed_components
            ],
            "foreground_before": self.foreground_before,
            "foreground_after": self.foreground_after,
        }


def postprocess(
    p: ProbabilityMap, params: PostprocessParams | None = None
) -> tuple[BinaryMask, PostprocessReport]:
    """Clean up a probability map, returning the final mask and a report.

    The map is first binarized at ``base_threshold``. If the foreground has
    at most ``small_case_cutoff`` voxels, components whose peak probability
    is below ``min_peak_probability`` are removed; otherwise the output is
    the map re-thresholded at ``high_threshold``.
    """
    if params is None:
        params = PostprocessParams()

    base = threshold(p, params.base_threshold)
    fg_before = foreground_count(base)

    if fg_before <= params.small_case_cutoff:
        cs = annotate_peaks(label_components(base, params.connectivity), p)
        floor = float(np.float32(params.min_peak_probability))
        removed = tuple(
            RemovedComponent(s.label, s.size, s.peak_probability)
            for s in cs.stats
            if s.peak_probability < floor
        )
        out = remove_components(base, cs, [r.label for r in removed])
        report = PostprocessReport(
            branch=SMALL_BRANCH,
            components_before=cs.count,
            components_after=cs.count - len(removed),
            removed_components=removed,
            foreground_before=fg_before,
            foreground_after=foreground_count(out),
        )
    else:
        out = threshold(p, params.high_threshold)
        report = PostprocessReport(
            branch=LARGE_BRANCH,
            components_before=label_components(base, params.connectivity).count,
            components_after=label_components(out, params.connectivity).count,
            removed_components=(),
            foreground_before=fg_before,
            foreground_after=foreground_count(out),
        )
    return out, report

"""Fuse per-model probability maps into one map by voxelwise averaging.

The mean is computed from weight-scaled terms sorted voxelwise before
summation, so the result is bit-identical under any permutation of the
inputs (and of their weights).
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ValidationError
from .volume import ProbabilityMap, require_compatible


def average_maps(
    maps: Sequence[ProbabilityMap],
    weights: Sequence[float] | None = None,
) -> ProbabilityMap:
    """Voxelwise weighted mean of probability maps.

    Weights are normalized to sum to 1; omitted weights mean a uniform
    average. All maps must share one grid; dims/spacing/affine are copied
    from the first map.
    """
    if len(maps) == 0:
        raise ValidationError("at least one probability map is required")
    first = maps[0]
    for m in maps[1:]:
        require_compatible(first, m)

    n = len(maps)
    if weights is None:
        w = np.full(n, 1.0 / n, dtype=np.float64)
    else:
        if len(weights) != n:
            raise ValidationError(
                f"got {len(weights)} weights for {n} maps; counts must match"
            )
        w = np.asarray([float(x) for x in weights], dtype=np.float64)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and non-negative")
        total = float(w.sum())
        if total <= 0.0:
            raise ValidationError("weights must not all be zero")
        w = w / total

    terms = np.stack(
        [m.data.astype(np.float64) * w[i] for i, m in enumerate(maps)], axis=0
    )
    terms.sort(axis=0, kind="stable")
    fused = terms.sum(axis=0).astype(np.float32)
    np.clip(fused, 0.0, 1.0, out=fused)
    return ProbabilityMap(fused, first.spacing, first.affine)

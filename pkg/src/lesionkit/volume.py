"""Dense 3-D volume model: scalar grids, probability maps, binary masks.

Volumes are indexed ``data[x, y, z]``. The canonical flat ordering of voxels
runs x fastest, then y, then z. Scalar values are held as float32; binary
masks use a compact uint8 representation. Arrays are frozen (made
non-writable) on construction, so volumes are safe to share across threads;
pass a copy if you need to keep a writable reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, ValidationError

# Relative tolerance for treating two voxel spacings as the same grid.
SPACING_RTOL = 1e-5


def _default_affine(spacing: tuple[float, float, float]) -> np.ndarray:
    affine = np.eye(4, dtype=np.float64)
    affine[0, 0], affine[1, 1], affine[2, 2] = spacing
    return affine


@dataclass(frozen=True)
class Volume3D:
    """A dense scalar grid with voxel spacing (mm) and a voxel-to-world affine."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValidationError(f"volume data must be 3-D, got {data.ndim}-D")
        if any(n < 1 for n in data.shape):
            raise ValidationError(f"volume dimensions must be positive, got {data.shape}")

        if len(self.spacing) != 3:
            raise ValidationError(f"spacing must have 3 entries, got {len(self.spacing)}")
        spacing = tuple(float(s) for s in self.spacing)
        if not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ValidationError(f"spacing entries must be finite and > 0, got {spacing}")

        if self.affine is None:
            affine = _default_affine(spacing)
        else:
            affine = np.asarray(self.affine, dtype=np.float64)
            if affine.shape != (4, 4):
                raise ValidationError(f"affine must be 4x4, got {affine.shape}")
            if not np.array_equal(affine[3], [0.0, 0.0, 0.0, 1.0]):
                raise ValidationError(f"affine last row must be (0, 0, 0, 1), got {affine[3]}")

        data.setflags(write=False)
        affine.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", affine)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.data.shape
        return nx * ny * nz


class ProbabilityMap(Volume3D):
    """Volume whose values are per-voxel foreground likelihoods in [0, 1]."""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        super().__post_init__()
        d = self.data
        if not bool(np.all((d >= 0.0) & (d <= 1.0))):
            raise ValidationError("probability map values must lie in [0, 1]")


class BinaryMask(Volume3D):
    """Volume whose values are exactly 0 or 1, stored as uint8."""

    def __post_init__(self):
        data = np.asarray(self.data)
        if not bool(np.all((data == 0) | (data == 1))):
            raise ValidationError("binary mask values must be exactly 0 or 1")
        if data.dtype != np.uint8:
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", data)
        super().__post_init__()


def as_probability_map(v: Volume3D) -> ProbabilityMap:
    """Reinterpret a generic volume as a probability map (validates range)."""
    if isinstance(v, ProbabilityMap):
        return v
    return ProbabilityMap(v.data, v.spacing, v.affine)


def as_binary_mask(v: Volume3D) -> BinaryMask:
    """Reinterpret a generic volume as a binary mask (validates values)."""
    if isinstance(v, BinaryMask):
        return v
    return BinaryMask(v.data, v.spacing, v.affine)


def threshold(p: ProbabilityMap, t: float) -> BinaryMask:
    """Binarize ``p``: voxel = 1 iff its value >= ``t`` (inclusive).

    The cut is applied at the map's 32-bit precision, so a voxel holding
    float32(t) compares equal to the cut and is kept.
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {t}")
    data = (p.data >= np.float32(t)).astype(np.uint8)
    return BinaryMask(data, p.spacing, p.affine)


def foreground_count(m: BinaryMask) -> int:
    """Number of foreground (value 1) voxels."""
    return int(np.count_nonzero(m.data))


def check_compatible(a: Volume3D, b: Volume3D) -> str | None:
    """Return None when the two volumes share a grid, else a description.

    Grids match when the dimensions are equal and each spacing entry agrees
    within relative tolerance ``SPACING_RTOL``. The description names the
    first differing field.
    """
    for name, da, db in zip(("nx", "ny", "nz"), a.dims, b.dims):
        if da != db:
            return f"{name}: {da} != {db}"
    for name, sa, sb in zip(("sx", "sy", "sz"), a.spacing, b.spacing):
        if not math.isclose(sa, sb, rel_tol=SPACING_RTOL, abs_tol=0.0):
            return f"{name}: {sa!r} != {sb!r}"
    return None


def require_compatible(a: Volume3D, b: Volume3D) -> None:
    """Raise :class:`GridMismatchError` unless the two volumes share a grid."""
    mismatch = check_compatible(a, b)
    if mismatch is not None:
        raise GridMismatchError(f"incompatible grids ({mismatch})")

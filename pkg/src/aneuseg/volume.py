"""Volumetric data model: geometry-aware image and binary-mask containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, VolumeError

# Relative spacing mismatch tolerated when pairing an image with a mask.
SPACING_RTOL = 1e-6


def _as_tuple3(values, name: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in values)
    if len(vals) != 3:
        raise VolumeError(f"{name} must have exactly 3 components, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class Volume3:
    """A 3D scalar grid with per-axis physical spacing (mm) and origin.

    ``voxels`` is a float32 array of shape (nx, ny, nz) indexed ``[x, y, z]``.
    The array is frozen after construction; instances are safe to share
    across threads.
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.voxels, dtype=np.float32)
        if arr.ndim != 3:
            raise VolumeError(f"expected a 3D voxel array, got ndim={arr.ndim}")
        if arr.size == 0:
            raise VolumeError("empty voxel array")
        if not np.all(np.isfinite(arr)):
            raise VolumeError("voxel data contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "voxels", arr)
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_tuple3(self.origin, "origin"))
        for s in self.spacing:
            if not (np.isfinite(s) and s > 0.0):
                raise VolumeError(f"spacing components must be positive and finite, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True)
class LabelMask:
    """A binary 3D grid geometrically aligned with a :class:`Volume3`.

    Voxels are uint8 and restricted to {0, 1}.
    """

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.voxels)
        if arr.ndim != 3:
            raise VolumeError(f"expected a 3D voxel array, got ndim={arr.ndim}")
        if arr.size == 0:
            raise VolumeError("empty voxel array")
        if arr.dtype != np.uint8:
            if not np.isin(arr, (0, 1)).all():
                raise VolumeError("label values must be exactly 0 or 1")
            arr = arr.astype(np.uint8)
        elif arr.max(initial=0) > 1:
            raise VolumeError("label values must be exactly 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "voxels", arr)
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _as_tuple3(self.origin, "origin"))
        for s in self.spacing:
            if not (np.isfinite(s) and s > 0.0):
                raise VolumeError(f"spacing components must be positive and finite, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.voxels))

    @property
    def foreground_volume_mm3(self) -> float:
        return self.foreground_count * self.voxel_volume_mm3


def geometry_matches(a: Volume3 | LabelMask, b: Volume3 | LabelMask,
                     spacing_rtol: float = SPACING_RTOL) -> bool:
    """True when two grids share dims and spacing (spacing to relative tol).

    Symmetric in its arguments.
    """
    if a.dims != b.dims:
        return False
    for sa, sb in zip(a.spacing, b.spacing):
        if abs(sa - sb) > spacing_rtol * max(abs(sa), abs(sb)):
            return False
    return True


def require_same_geometry(a: Volume3 | LabelMask, b: Volume3 | LabelMask) -> None:
    if not geometry_matches(a, b):
        raise GeometryError(
            f"geometry mismatch: dims {a.dims} vs {b.dims}, spacing {a.spacing} vs {b.spacing}"
        )

"""Slice rendering: grayscale PGM output with mask boundary overlay."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import GeometryError, VolumeError
from .volume import LabelMask, Volume3, require_same_geometry

_AXES = {"x": 0, "y": 1, "z": 2}


def _take_slice(arr: np.ndarray, axis: int, index: int) -> np.ndarray:
    if not 0 <= index < arr.shape[axis]:
        raise VolumeError(f"slice index {index} out of range for axis size {arr.shape[axis]}")
    return np.take(arr, index, axis=axis)


def boundary_pixels(mask_slice: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one 4-neighbor equal to 0 within the slice.

    Pixels outside the slice count as background, so mask pixels on the
    slice edge are boundary pixels.
    """
    m = mask_slice.astype(bool)
    padded = np.pad(m, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def render_overlay(vol: Volume3, mask: LabelMask, axis: str, index: int, path) -> Path:
    """Write one slice as a binary PGM (P5) with the mask boundary at 255.

    Intensities are min-max scaled to 0..255 per slice; a flat slice maps
    to 0. The first slice axis is written as PGM rows.
    """
    if axis not in _AXES:
        raise VolumeError(f"axis must be one of x, y, z; got {axis!r}")
    require_same_geometry(vol, mask)
    ax = _AXES[axis]
    img = _take_slice(vol.voxels, ax, index).astype(np.float64)
    msk = _take_slice(mask.voxels, ax, index)

    lo, hi = img.min(), img.max()
    if hi > lo:
        scaled = np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(img.shape, dtype=np.uint8)
    scaled[boundary_pixels(msk)] = 255

    height, width = scaled.shape
    out = Path(path)
    out.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + scaled.tobytes())
    return out

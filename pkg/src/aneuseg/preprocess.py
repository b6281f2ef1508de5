"""Preprocessing: resampling to a common isotropic spacing and z-scoring.

Images are resampled with an interpolating cubic B-spline (prefiltered,
mirror boundary), masks with nearest neighbor. Intensities are normalized
to mean 0 / population standard deviation 1 over the whole volume.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, VolumeError
from .volume import LabelMask, Volume3

DEFAULT_TARGET_SPACING = (0.5429, 0.5429, 0.5429)
_ALLOWED_ORDERS = (0, 1, 3)


class DegenerateGridWarning(UserWarning):
    """An output dimension rounded to zero and was clamped to 1."""


@dataclass(frozen=True)
class PreprocessConfig:
    target_spacing: tuple[float, float, float] = DEFAULT_TARGET_SPACING
    image_order: int = 3
    mask_order: int = 0  # nearest neighbor keeps labels binary

    def __post_init__(self):
        if len(self.target_spacing) != 3 or any(s <= 0 for s in self.target_spacing):
            raise ConfigError(f"target_spacing must be 3 positive values, got {self.target_spacing}")
        if self.image_order not in _ALLOWED_ORDERS:
            raise ConfigError(f"image_order must be one of {_ALLOWED_ORDERS}, got {self.image_order}")
        if self.mask_order != 0:
            raise ConfigError("mask_order is fixed to 0 (nearest neighbor)")


def _output_dims(dims, spacing, target) -> tuple[int, int, int]:
    out = []
    for d, s, t in zip(dims, spacing, target):
        n = int(round(d * s / t))
        if n < 1:
            warnings.warn(
                f"output dim rounded to 0 for input dim {d} (spacing {s} -> {t}); clamped to 1",
                DegenerateGridWarning,
                stacklevel=3,
            )
            n = 1
        out.append(n)
    return tuple(out)


def _resample(voxels: np.ndarray, spacing, target, order: int) -> np.ndarray:
    out_dims = _output_dims(voxels.shape, spacing, target)
    # output voxel i samples input coordinate i * target / spacing
    matrix = np.diag([t / s for s, t in zip(spacing, target)])
    return ndimage.affine_transform(
        voxels,
        matrix,
        output_shape=out_dims,
        order=order,
        mode="mirror",
        prefilter=order > 1,
    )


def resample_image(vol: Volume3, cfg: PreprocessConfig) -> Volume3:
    """Resample a volume to ``cfg.target_spacing``.

    Output dims are round(dims * spacing / target), clamped to >= 1. The
    order-3 path is an interpolating prefiltered cubic B-spline, so
    resampling to the source spacing reproduces the input to float
    precision.
    """
    data = _resample(vol.voxels.astype(np.float64), vol.spacing, cfg.target_spacing, cfg.image_order)
    return Volume3(data.astype(np.float32), cfg.target_spacing, vol.origin)


def resample_mask(mask: LabelMask, cfg: PreprocessConfig) -> LabelMask:
    """Nearest-neighbor resample of a binary mask; values stay in {0, 1}."""
    data = _resample(mask.voxels, mask.spacing, cfg.target_spacing, cfg.mask_order)
    return LabelMask(data.astype(np.uint8), cfg.target_spacing, mask.origin)


def znormalize(vol: Volume3, min_std: float = 1e-8) -> Volume3:
    """Shift/scale intensities to mean 0, population standard deviation 1.

    Statistics are taken over the whole volume in float64. A (near-)
    constant volume is an error rather than a silent division.
    """
    data = vol.voxels.astype(np.float64)
    mean = data.mean()
    std = data.std()  # population; no ddof correction
    if std <= min_std:
        raise VolumeError(f"cannot z-normalize: standard deviation {std:.3e} <= {min_std:.0e}")
    normed = (data - mean) / std
    return Volume3(normed.astype(np.float32), vol.spacing, vol.origin)

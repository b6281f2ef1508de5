"""Deterministic synthetic benchmark: bright spheres in Gaussian noise.

Each case is a cube of unit-variance Gaussian background noise with one
or two bright spheres (+3 sigma contrast) and an exact analytic sphere
mask — small, fully self-checking stand-ins for vascular volumes, used
by the end-to-end tests and usable from the estimator API.
"""

from __future__ import annotations

import numpy as np

from .errors import VolumeError
from .rng import derive_rng
from .volume import LabelMask, Volume3

DEFAULT_SIZE = 64
DEFAULT_SPACING = 0.5
DEFAULT_CONTRAST = 3.0
RADIUS_RANGE = (4.0, 10.0)
SPHERES_RANGE = (1, 2)


def generate_case(seed: int, case_index: int, size: int = DEFAULT_SIZE,
                  spacing: float = DEFAULT_SPACING,
                  contrast: float = DEFAULT_CONTRAST,
                  radius_range: tuple[float, float] = RADIUS_RANGE):
    """One (Volume3, LabelMask) pair, deterministic in (seed, case_index).

    The image is N(0, 1) noise plus ``contrast`` inside the mask; the
    mask is the exact voxel-center union of the spheres, each kept fully
    inside the grid.
    """
    if size - 1 - 2 * radius_range[1] < 0:
        raise VolumeError(
            f"size {size} cannot contain a radius-{radius_range[1]} sphere; "
            f"need size >= {int(np.ceil(2 * radius_range[1] + 1))}"
        )
    rng = derive_rng(seed, "synthetic", case_index)
    noise = rng.normal(0.0, 1.0, size=(size, size, size))
    n_spheres = int(rng.integers(SPHERES_RANGE[0], SPHERES_RANGE[1] + 1))
    grid = np.arange(size, dtype=np.float64)
    gx, gy, gz = np.meshgrid(grid, grid, grid, indexing="ij")
    mask = np.zeros((size, size, size), dtype=bool)
    for _ in range(n_spheres):
        radius = float(rng.uniform(*radius_range))
        center = rng.uniform(radius, size - 1 - radius, size=3)
        dist2 = ((gx - center[0]) ** 2 + (gy - center[1]) ** 2 + (gz - center[2]) ** 2)
        mask |= dist2 <= radius * radius
    image = (noise + contrast * mask).astype(np.float32)
    sp = (spacing, spacing, spacing)
    return Volume3(image, sp), LabelMask(mask.astype(np.uint8), sp)


def generate_dataset(n_cases: int = 20, seed: int = 0, size: int = DEFAULT_SIZE,
                     spacing: float = DEFAULT_SPACING,
                     radius_range: tuple[float, float] = RADIUS_RANGE):
    """Ordered mapping case id -> (Volume3, LabelMask)."""
    return {
        f"case_{i:02d}": generate_case(seed, i, size=size, spacing=spacing,
                                       radius_range=radius_range)
        for i in range(n_cases)
    }

"""Independent reference implementations used as test oracles.

These deliberately share no code with the package: overlap scores come
from Python set arithmetic, surfaces from an explicit neighbor walk, and
distances from one dense all-pairs matrix — so agreement with the
package is evidence, not an identity.
"""

from __future__ import annotations

import math

import numpy as np

_NEIGHBORS6 = (
    (1, 0, 0), (-1, 0, 0),
    (0, 1, 0), (0, -1, 0),
    (0, 0, 1), (0, 0, -1),
)


def voxel_set(mask) -> set[tuple[int, int, int]]:
    arr = np.asarray(mask)
    return {tuple(int(i) for i in idx) for idx in np.argwhere(arr != 0)}


def overlap_oracle(pred, ref):
    """(jaccard, dice, precision, recall) via set arithmetic.

    Conventions: any 0/0 ratio scores 1 (perfect agreement on 'nothing').
    """
    p = voxel_set(pred)
    r = voxel_set(ref)
    tp = len(p & r)
    fp = len(p - r)
    fn = len(r - p)
    union = tp + fp + fn
    jaccard = tp / union if union else 1.0
    dice = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    return jaccard, dice, precision, recall


def surface_set(mask) -> set[tuple[int, int, int]]:
    """Foreground voxels with a background 6-neighbor (grid edge counts)."""
    arr = np.asarray(mask) != 0
    shape = arr.shape
    out = set()
    for idx in np.argwhere(arr):
        x, y, z = (int(i) for i in idx)
        for dx, dy, dz in _NEIGHBORS6:
            nx, ny, nz = x + dx, y + dy, z + dz
            inside = 0 <= nx < shape[0] and 0 <= ny < shape[1] and 0 <= nz < shape[2]
            if not inside or not arr[nx, ny, nz]:
                out.add((x, y, z))
                break
    return out


def distance_oracle(pred, ref, spacing):
    """(hausdorff_mm, mean_distance_mm) by dense all-pairs distances."""
    sp = np.asarray(spacing, dtype=np.float64)
    a = np.array(sorted(surface_set(pred)), dtype=np.float64) * sp
    b = np.array(sorted(surface_set(ref)), dtype=np.float64) * sp
    if len(a) == 0 or len(b) == 0:
        raise ValueError("distance oracle needs two nonempty masks")
    diff = a[:, None, :] - b[None, :, :]
    dmat = np.sqrt((diff * diff).sum(axis=-1))
    d_ab = dmat.min(axis=1)
    d_ba = dmat.min(axis=0)
    hausdorff = max(float(d_ab.max()), float(d_ba.max()))
    mean = float(np.concatenate([d_ab, d_ba]).mean())
    return hausdorff, mean


def pearson_oracle(xs, ys) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


def random_mask_pair(rng: np.random.Generator, shape=(8, 8, 8)):
    """A seeded pair of blobby binary masks used by the fuzz harnesses."""
    def blob():
        arr = np.zeros(shape, dtype=np.uint8)
        n_seeds = int(rng.integers(0, 4))
        for _ in range(n_seeds):
            c = rng.integers(0, np.asarray(shape))
            rad = float(rng.uniform(0.5, 3.0))
            grid = np.indices(shape).astype(np.float64)
            d2 = sum((grid[i] - c[i]) ** 2 for i in range(3))
            arr[d2 <= rad * rad] = 1
        return arr
    return blob(), blob()

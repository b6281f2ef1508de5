"""Patch geometry: validation against the multi-resolution architecture,
activation-memory estimation, training-patch sampling, and sliding-window
tile planning.

A patch is valid for a network with R resolutions when every dimension is
divisible by 2^(R-1) and the resulting bottleneck extent is at least
``min_bottleneck`` voxels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import PatchError
from .volume import LabelMask, Volume3

DEFAULT_FG_PROBABILITY = 1.0 / 3.0
DEFAULT_OVERLAP = 0.5
DEFAULT_SIGMA_SCALE = 1.0 / 8.0
# Weights below 1e-6 of the window maximum are clamped so stitched
# probability maps never divide by zero.
WINDOW_FLOOR = 1e-6


@dataclass(frozen=True)
class PatchSpec:
    """Patch shape, batch size and resolution count for one configuration."""

    patch_size: tuple[int, int, int]
    batch_size: int = 2
    num_resolutions: int = 6
    min_bottleneck: int = 4

    @property
    def bottleneck(self) -> tuple[int, int, int]:
        d = 2 ** (self.num_resolutions - 1)
        return tuple(p // d for p in self.patch_size)  # type: ignore[return-value]


@dataclass(frozen=True)
class TilePlan:
    """Patch origins covering a (possibly padded) volume."""

    offsets: tuple[tuple[int, int, int], ...]
    patch_size: tuple[int, int, int]
    padded_dims: tuple[int, int, int]
    pad_low: tuple[int, int, int]
    pad_high: tuple[int, int, int]


def patch_is_valid(patch_size, num_resolutions: int, min_bottleneck: int = 4) -> bool:
    d = 2 ** (num_resolutions - 1)
    return all(p % d == 0 and p // d >= min_bottleneck for p in patch_size)


def validate_patch(patch_size, num_resolutions: int, min_bottleneck: int = 4,
                   batch_size: int = 2) -> PatchSpec:
    """Check a patch shape against the architecture and return a PatchSpec.

    Raises :class:`PatchError` naming the offending axis, with the nearest
    valid sizes below and above, when a dimension is not divisible by
    2^(R-1) or the bottleneck would be smaller than ``min_bottleneck``.
    """
    patch_size = tuple(int(p) for p in patch_size)
    if len(patch_size) != 3 or any(p < 1 for p in patch_size):
        raise PatchError(f"patch_size must be 3 positive integers, got {patch_size}")
    if num_resolutions < 2:
        raise PatchError(f"num_resolutions must be >= 2, got {num_resolutions}")
    if batch_size < 1:
        raise PatchError(f"batch_size must be >= 1, got {batch_size}")
    d = 2 ** (num_resolutions - 1)
    for axis, p in zip("xyz", patch_size):
        if p % d != 0:
            below = (p // d) * d
            above = below + d
            suggestions = [s for s in (below, above) if s // d >= min_bottleneck]
            raise PatchError(
                f"axis {axis}: patch dim {p} not divisible by 2^(R-1)={d} "
                f"for {num_resolutions} resolutions; nearest valid sizes: {suggestions}"
            )
    for axis, p in zip("xyz", patch_size):
        if p // d < min_bottleneck:
            raise PatchError(
                f"axis {axis}: bottleneck extent {p // d} below minimum {min_bottleneck} "
                f"(patch dim {p} at {num_resolutions} resolutions); "
                f"smallest valid size: {d * min_bottleneck}"
            )
    return PatchSpec(patch_size, batch_size, num_resolutions, min_bottleneck)


def estimate_activation_memory(spec: PatchSpec, base_channels: int = 32,
                               channel_cap: int = 320, bytes_per_scalar: int = 4) -> int:
    """Bytes of activation storage for one forward+backward pass.

    Closed form, with V = px*py*pz, C(r) = min(base_channels * 2^r,
    channel_cap), encoder levels r = 0..R-1 and decoder levels r = 0..R-2:

        bytes = batch * bytes_per_scalar * 2                # fwd + bwd
                * sum over levels of [2 conv outputs * C(r) * V / 8^r]

    Exact integer arithmetic; the estimate is strictly monotone in batch
    size, patch volume, and base_channels (below the cap).
    """
    px, py, pz = spec.patch_size
    r_levels = list(range(spec.num_resolutions)) + list(range(spec.num_resolutions - 1))
    scalars = 0
    for r in r_levels:
        c = min(base_channels * 2 ** r, channel_cap)
        v = (px >> r) * (py >> r) * (pz >> r)
        scalars += 2 * c * v
    return spec.batch_size * bytes_per_scalar * 2 * scalars


def _pad_for_patch(image: np.ndarray, mask: np.ndarray, patch: tuple[int, int, int]):
    pad = [(0, 0)] * 3
    needs = False
    for d in range(3):
        short = max(0, patch[d] - image.shape[d])
        if short:
            pad[d] = (short // 2, short - short // 2)
            needs = True
    if not needs:
        return image, mask
    # mirror keeps image intensities plausible; zeros keep labels valid
    return (np.pad(image, pad, mode="reflect"),
            np.pad(mask, pad, mode="constant", constant_values=0))


def sample_training_patch(vol: Volume3, mask: LabelMask, spec: PatchSpec,
                          rng: np.random.Generator,
                          fg_probability: float = DEFAULT_FG_PROBABILITY,
                          fg_coords: np.ndarray | None = None):
    """Draw one (image, label) patch pair of exactly ``spec.patch_size``.

    With probability ``fg_probability`` (and a nonempty mask) the patch is
    centered on a uniformly chosen foreground voxel, clamped to stay in
    bounds; otherwise the origin is uniform over all valid origins.
    Volumes smaller than the patch are mirror-padded (zeros for labels).
    Deterministic given the generator state. ``fg_coords`` may carry
    precomputed ``np.argwhere(mask)`` results to skip the rescan.
    """
    patch = spec.patch_size
    image, labels = _pad_for_patch(vol.voxels, mask.voxels, patch)
    pad_low = tuple((p - d) // 2 if p > d else 0 for p, d in zip(patch, vol.dims))
    pdims = image.shape

    use_fg = rng.random() < fg_probability
    origin = None
    if use_fg:
        if fg_coords is None:
            fg_coords = np.argwhere(mask.voxels)
        if len(fg_coords):
            center = fg_coords[rng.integers(len(fg_coords))]
            origin = tuple(
                int(np.clip(c + lo - p // 2, 0, pd - p))
                for c, lo, p, pd in zip(center, pad_low, patch, pdims)
            )
    if origin is None:
        origin = tuple(int(rng.integers(0, pd - p + 1)) for p, pd in zip(patch, pdims))

    sl = tuple(slice(o, o + p) for o, p in zip(origin, patch))
    return np.ascontiguousarray(image[sl]), np.ascontiguousarray(labels[sl])


def tile_sliding_window(dims, patch_size, overlap_fraction: float = DEFAULT_OVERLAP) -> TilePlan:
    """Plan patch origins so the union of tiles covers every voxel.

    Step per axis is max(1, floor(patch * (1 - overlap_fraction))); the
    last tile is clamped flush to the end. Dims smaller than the patch are
    symmetrically padded, recorded in pad_low/pad_high.
    """
    if not 0 <= overlap_fraction < 1:
        raise PatchError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    dims = tuple(int(d) for d in dims)
    patch_size = tuple(int(p) for p in patch_size)
    pad_low, pad_high, padded = [], [], []
    for d, p in zip(dims, patch_size):
        short = max(0, p - d)
        pad_low.append(short // 2)
        pad_high.append(short - short // 2)
        padded.append(max(d, p))

    per_axis = []
    for pd, p in zip(padded, patch_size):
        step = max(1, int(p * (1.0 - overlap_fraction)))
        starts = list(range(0, pd - p + 1, step))
        if starts[-1] != pd - p:
            starts.append(pd - p)
        per_axis.append(starts)

    offsets = tuple(itertools.product(*per_axis))
    return TilePlan(
        offsets=offsets,
        patch_size=patch_size,
        padded_dims=tuple(padded),
        pad_low=tuple(pad_low),
        pad_high=tuple(pad_high),
    )


def gaussian_window(patch_size, sigma_scale: float = DEFAULT_SIGMA_SCALE) -> np.ndarray:
    """Separable Gaussian importance weights over a patch, max-normalized.

    sigma per axis is ``sigma_scale * patch_dim``; the window peaks at the
    patch center and is floored at 1e-6 of the maximum so it is strictly
    positive everywhere.
    """
    if sigma_scale <= 0:
        raise PatchError(f"sigma_scale must be > 0, got {sigma_scale}")
    axes = []
    for p in patch_size:
        sigma = sigma_scale * p
        x = np.arange(p, dtype=np.float64) - (p - 1) / 2.0
        axes.append(np.exp(-(x * x) / (2.0 * sigma * sigma)))
    w = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
    w /= w.max()
    return np.maximum(w, WINDOW_FLOOR)

"""Training-time patch augmentation: rotation, scaling, noise, gamma.

Each transform fires independently with its configured probability. The
random draw order is fixed — rotate gate, (angles), scale gate,
(factor), noise gate, (sigma, field), gamma gate, (exponent) — so a
given generator state always produces the same augmented pair.

Spatial transforms rotate about the patch center (extrinsic per-axis
rotations composed in x, then y, then z order) and scale isotropically
(factor > 1 enlarges structures); the image is interpolated linearly
with mirror boundary, the label with nearest neighbor so it stays
binary. Noise and gamma touch the image only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, PatchError

_ROT90_PLANES = {"x": (1, 2), "y": (2, 0), "z": (0, 1)}


@dataclass(frozen=True)
class AugmentConfig:
    p_rotate: float = 0.2
    rotate_max_degrees: float = 30.0  # each axis draws from ±this
    p_scale: float = 0.2
    scale_range: tuple[float, float] = (0.7, 1.4)
    p_noise: float = 0.15
    noise_sigma_range: tuple[float, float] = (0.0, 0.1)  # in z-scored units
    p_gamma: float = 0.15
    gamma_range: tuple[float, float] = (0.7, 1.5)

    def __post_init__(self):
        for name in ("p_rotate", "p_scale", "p_noise", "p_gamma"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        for name in ("scale_range", "noise_sigma_range", "gamma_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ConfigError(f"{name} must be a finite (low, high) pair, got {(lo, hi)}")
        if self.scale_range[0] <= 0:
            raise ConfigError(f"scale factors must be > 0, got {self.scale_range}")
        if self.gamma_range[0] <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma_range}")
        if self.rotate_max_degrees < 0:
            raise ConfigError(f"rotate_max_degrees must be >= 0, got {self.rotate_max_degrees}")


def rotation_matrix(degrees_x: float, degrees_y: float, degrees_z: float) -> np.ndarray:
    """Compose extrinsic rotations about x, then y, then z (Rz @ Ry @ Rx)."""
    ax, ay, az = np.deg2rad([degrees_x, degrees_y, degrees_z])
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _apply_affine(arr: np.ndarray, push: np.ndarray, order: int) -> np.ndarray:
    """Resample so content at p lands at push @ (p - c) + c (c = center)."""
    center = (np.asarray(arr.shape, dtype=np.float64) - 1.0) / 2.0
    pull = np.linalg.inv(push)
    offset = center - pull @ center
    return ndimage.affine_transform(
        arr.astype(np.float64), pull, offset=offset, output_shape=arr.shape,
        order=order, mode="mirror", prefilter=False,
    )


def augment_pair(image: np.ndarray, label: np.ndarray, cfg: AugmentConfig,
                 rng: np.random.Generator):
    """Return a stochastically augmented (image, label) patch pair.

    Inputs are unchanged; identical shapes in and out; with all
    probabilities zero the inputs are returned as-is.
    """
    if image.shape != label.shape:
        raise PatchError(f"image shape {image.shape} != label shape {label.shape}")

    push = None
    if rng.random() < cfg.p_rotate:
        degs = rng.uniform(-cfg.rotate_max_degrees, cfg.rotate_max_degrees, size=3)
        push = rotation_matrix(*degs)
    if rng.random() < cfg.p_scale:
        factor = rng.uniform(*cfg.scale_range)
        scale = factor * np.eye(3)
        push = scale if push is None else push @ scale
    if push is not None:
        image = _apply_affine(image, push, order=1).astype(image.dtype)
        label = _apply_affine(label, push, order=0).astype(label.dtype)

    if rng.random() < cfg.p_noise:
        sigma = rng.uniform(*cfg.noise_sigma_range)
        noise = rng.normal(0.0, sigma, size=image.shape)
        image = (image.astype(np.float64) + noise).astype(image.dtype)

    if rng.random() < cfg.p_gamma:
        gamma = rng.uniform(*cfg.gamma_range)
        lo = float(image.min())
        hi = float(image.max())
        if hi > lo:
            v = (image.astype(np.float64) - lo) / (hi - lo)
            image = (np.power(v, gamma) * (hi - lo) + lo).astype(image.dtype)

    return image, label


def rotate90_exact(patch: np.ndarray, axis: str, quarter_turns: int) -> np.ndarray:
    """Lossless 90-degree-multiple rotation about a named axis.

    One positive quarter turn matches :func:`rotation_matrix` at +90 on
    the same axis. The two in-plane dimensions must be equal.
    """
    if axis not in _ROT90_PLANES:
        raise PatchError(f"axis must be one of x, y, z, got {axis!r}")
    a, b = _ROT90_PLANES[axis]
    if patch.shape[a] != patch.shape[b]:
        raise PatchError(
            f"rotation plane ({'xyz'[a]}, {'xyz'[b]}) is not square: "
            f"{patch.shape[a]} x {patch.shape[b]}"
        )
    return np.rot90(patch, k=quarter_turns, axes=(a, b))

"""Full-volume prediction: Gaussian-weighted sliding-window stitching,
resampling probabilities back to native geometry, and model ensembling.

The pipeline per case: resample + z-normalize the volume, run the model
on every tile of a sliding-window plan, blend per-tile softmax outputs
with a center-weighted Gaussian window (float64 accumulators, fixed tile
order), resample the foreground probability back to the native grid with
linear interpolation, and take foreground where probability >= 0.5.

Ensembling averages the per-model stitched probability maps on the
common preprocessed grid before the resample-back step; with one model
it is exactly the single-model path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import CheckpointError, ConfigError, PatchError
from .nn_ops import softmax_channels
from .patches import (DEFAULT_OVERLAP, DEFAULT_SIGMA_SCALE, PatchSpec,
                      gaussian_window, tile_sliding_window)
from .preprocess import PreprocessConfig, resample_image, znormalize
from .unet import NetParams, forward
from .volume import LabelMask, Volume3

FOREGROUND_THRESHOLD = 0.5


@dataclass(frozen=True)
class InferConfig:
    overlap: float = DEFAULT_OVERLAP
    sigma_scale: float = DEFAULT_SIGMA_SCALE

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.sigma_scale <= 0:
            raise ConfigError(f"sigma_scale must be > 0, got {self.sigma_scale}")


def make_model_fn(params: NetParams):
    """Wrap NetParams as a tile -> logits callable (the stitching seam)."""
    def model_fn(tile: np.ndarray) -> np.ndarray:
        return forward(params, tile)
    return model_fn


def stitch_probabilities(model_fn, voxels: np.ndarray, spec: PatchSpec,
                         infer_cfg: InferConfig = InferConfig()) -> np.ndarray:
    """Blend per-tile class probabilities over a full grid.

    ``model_fn`` maps a (1, 1, px, py, pz) tile to (1, 2, px, py, pz)
    logits. Returns float32 probabilities (2, X, Y, Z) on the input grid;
    tiles are visited in plan order and accumulated in float64, so the
    result is independent of any concurrent evaluation schedule.
    """
    dims = voxels.shape
    plan = tile_sliding_window(dims, spec.patch_size, infer_cfg.overlap)
    pad = tuple(zip(plan.pad_low, plan.pad_high))
    padded = np.pad(voxels, pad, mode="reflect") if any(plan.pad_low + plan.pad_high) else voxels

    window = gaussian_window(spec.patch_size, infer_cfg.sigma_scale)  # float64
    acc = np.zeros((2,) + plan.padded_dims, dtype=np.float64)
    wsum = np.zeros(plan.padded_dims, dtype=np.float64)
    for offset in plan.offsets:
        sl = tuple(slice(o, o + p) for o, p in zip(offset, spec.patch_size))
        tile = np.ascontiguousarray(padded[sl], dtype=np.float32)[None, None]
        logits = model_fn(tile)
        if logits.shape != (1, 2) + spec.patch_size:
            raise PatchError(
                f"model returned {logits.shape}, expected {(1, 2) + spec.patch_size}"
            )
        probs = softmax_channels(logits.astype(np.float64))[0]
        acc[(slice(None),) + sl] += window * probs
        wsum[sl] += window
    acc /= wsum
    crop = tuple(slice(lo, lo + d) for lo, d in zip(plan.pad_low, dims))
    return acc[(slice(None),) + crop].astype(np.float32)


def _resample_to_native(prob: np.ndarray, target_spacing, native_dims,
                        native_spacing) -> np.ndarray:
    # native voxel j samples preprocessed coordinate j * native / target
    matrix = np.diag([n / t for n, t in zip(native_spacing, target_spacing)])
    out = ndimage.affine_transform(
        prob.astype(np.float64), matrix, output_shape=tuple(native_dims),
        order=1, mode="mirror", prefilter=False,
    )
    return np.clip(out, 0.0, 1.0)


def _check_compatible(models: list[NetParams], spec: PatchSpec) -> None:
    if not models:
        raise CheckpointError("at least one model is required")
    first = asdict(models[0].config)
    for m in models[1:]:
        if asdict(m.config) != first:
            raise CheckpointError("ensemble members have differing network configs")
    if models[0].config.num_resolutions != spec.num_resolutions:
        raise CheckpointError(
            f"checkpoint has {models[0].config.num_resolutions} resolutions, "
            f"patch spec expects {spec.num_resolutions}"
        )
    d = 2 ** (spec.num_resolutions - 1)
    if any(p % d for p in spec.patch_size):
        raise PatchError(f"patch {spec.patch_size} invalid for {spec.num_resolutions} resolutions")


def ensemble_predict_fns(model_fns, vol: Volume3, spec: PatchSpec,
                         preprocess_cfg: PreprocessConfig,
                         infer_cfg: InferConfig = InferConfig()):
    """Ensemble over arbitrary tile->logits callables (testing seam).

    Returns (LabelMask, probability Volume3), both in the input volume's
    native geometry.
    """
    pre = znormalize(resample_image(vol, preprocess_cfg))
    maps = [stitch_probabilities(fn, pre.voxels, spec, infer_cfg)[1] for fn in model_fns]
    mean_fg = (np.sum(np.stack(maps).astype(np.float64), axis=0)
               / len(maps)).astype(np.float32)
    native_prob = _resample_to_native(
        mean_fg, preprocess_cfg.target_spacing, vol.dims, vol.spacing
    )
    mask = (native_prob >= FOREGROUND_THRESHOLD).astype(np.uint8)
    return (LabelMask(mask, vol.spacing, vol.origin),
            Volume3(native_prob.astype(np.float32), vol.spacing, vol.origin))


def ensemble_predict(models: list[NetParams], vol: Volume3, spec: PatchSpec,
                     preprocess_cfg: PreprocessConfig,
                     infer_cfg: InferConfig = InferConfig()):
    """Average the stitched probability maps of several models, then
    resample back and threshold. One model reduces to predict_volume.
    """
    _check_compatible(models, spec)
    return ensemble_predict_fns([make_model_fn(m) for m in models],
                                vol, spec, preprocess_cfg, infer_cfg)


def predict_volume(params: NetParams, vol: Volume3, spec: PatchSpec,
                   preprocess_cfg: PreprocessConfig,
                   infer_cfg: InferConfig = InferConfig()):
    """Single-model full-volume prediction in native geometry."""
    return ensemble_predict([params], vol, spec, preprocess_cfg, infer_cfg)

"""Scikit-learn style estimator facade over the segmentation pipeline.

``SegmentationPreprocessor`` is a stateless transformer (resample +
z-score); ``UNetSegmenter.fit`` runs k-fold cross-validation training
and ``predict`` ensembles the fold models, so the whole train/ensemble
pipeline composes with familiar estimator idioms:

    seg = UNetSegmenter(n_folds=5, seed=7).fit(volumes, masks)
    masks = seg.predict(volumes)

X is a list of :class:`~.volume.Volume3` (native geometry) and y a list
of :class:`~.volume.LabelMask`; predictions come back in each input's
native geometry. Rows of a design matrix make no sense for volumetric
cases, so only the estimator API contract (get/set_params, fit returning
self, fitted attributes with trailing underscores) is followed, not the
array-input checks.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import TrainingError
from .inference import InferConfig, ensemble_predict
from .losses import OptimizerConfig
from .metrics import overlap_metrics
from .patches import DEFAULT_FG_PROBABILITY, validate_patch
from .preprocess import (DEFAULT_TARGET_SPACING, PreprocessConfig,
                         resample_image, resample_mask, znormalize)
from .training import TrainRunConfig, split_folds, train_fold
from .augment import AugmentConfig
from .unet import UNetConfig


class SegmentationPreprocessor(BaseEstimator, TransformerMixin):
    """Resample volumes to a target spacing and z-score them."""

    def __init__(self, target_spacing=DEFAULT_TARGET_SPACING, image_order=3):
        self.target_spacing = target_spacing
        self.image_order = image_order

    def _config(self) -> PreprocessConfig:
        return PreprocessConfig(tuple(self.target_spacing), self.image_order)

    def fit(self, X, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        cfg = self._config()
        return [znormalize(resample_image(vol, cfg)) for vol in X]

    def transform_masks(self, masks):
        cfg = self._config()
        return [resample_mask(m, cfg) for m in masks]


class UNetSegmenter(BaseEstimator):
    """Cross-validated 3D U-Net segmentation with ensemble prediction.

    ``fit(X, y)`` preprocesses the cases, splits them into ``n_folds``
    folds, and trains one model per fold; ``predict`` averages all fold
    models' stitched probability maps. Defaults are desk-scale (three
    resolutions, 32-voxel patches).
    """

    def __init__(self, patch_size=(32, 32, 32), num_resolutions=3, base_channels=4,
                 channel_cap=320, batch_size=2, n_folds=5, epochs=50,
                 iterations_per_epoch=25, lr0=0.01, momentum=0.99, power=0.9,
                 fg_probability=DEFAULT_FG_PROBABILITY, validate_every=10,
                 target_spacing=DEFAULT_TARGET_SPACING, overlap=0.5,
                 sigma_scale=0.125, augment=True, seed=0):
        self.patch_size = patch_size
        self.num_resolutions = num_resolutions
        self.base_channels = base_channels
        self.channel_cap = channel_cap
        self.batch_size = batch_size
        self.n_folds = n_folds
        self.epochs = epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.lr0 = lr0
        self.momentum = momentum
        self.power = power
        self.fg_probability = fg_probability
        self.validate_every = validate_every
        self.target_spacing = target_spacing
        self.overlap = overlap
        self.sigma_scale = sigma_scale
        self.augment = augment
        self.seed = seed

    def _train_config(self) -> TrainRunConfig:
        spec = validate_patch(self.patch_size, self.num_resolutions,
                              batch_size=self.batch_size)
        augment = AugmentConfig() if self.augment else AugmentConfig(
            p_rotate=0.0, p_scale=0.0, p_noise=0.0, p_gamma=0.0)
        return TrainRunConfig(
            patch=spec,
            net=UNetConfig(num_resolutions=self.num_resolutions,
                           base_channels=self.base_channels,
                           channel_cap=self.channel_cap),
            optimizer=OptimizerConfig(self.lr0, self.momentum, self.power),
            augment=augment,
            infer=InferConfig(self.overlap, self.sigma_scale),
            preprocess=PreprocessConfig(tuple(self.target_spacing)),
            epochs=self.epochs,
            iterations_per_epoch=self.iterations_per_epoch,
            fg_probability=self.fg_probability,
            validate_every=self.validate_every,
            seed=self.seed,
        )

    def fit(self, X, y):
        if len(X) != len(y):
            raise TrainingError(f"got {len(X)} volumes but {len(y)} masks")
        cfg = self._train_config()
        pre = SegmentationPreprocessor(self.target_spacing)
        dataset = {
            f"case_{i:03d}": (vol, mask)
            for i, (vol, mask) in enumerate(zip(pre.transform(X), pre.transform_masks(y)))
        }
        self.split_ = split_folds(sorted(dataset), k=self.n_folds, seed=self.seed)
        self.models_ = []
        self.logs_ = []
        for fold_index in range(self.split_.k):
            params, logs = train_fold(dataset, self.split_, fold_index, cfg)
            self.models_.append(params)
            self.logs_.append(logs)
        self.train_config_ = cfg
        return self

    def _check_fitted(self):
        if not hasattr(self, "models_"):
            raise TrainingError("this UNetSegmenter is not fitted yet")

    def predict(self, X):
        self._check_fitted()
        cfg = self.train_config_
        return [
            ensemble_predict(self.models_, vol, cfg.patch, cfg.preprocess, cfg.infer)[0]
            for vol in X
        ]

    def predict_proba(self, X):
        self._check_fitted()
        cfg = self.train_config_
        return [
            ensemble_predict(self.models_, vol, cfg.patch, cfg.preprocess, cfg.infer)[1]
            for vol in X
        ]

    def score(self, X, y):
        """Mean Dice of ensemble predictions against reference masks."""
        preds = self.predict(X)
        return float(np.mean([
            overlap_metrics(pred, ref)[1] for pred, ref in zip(preds, y)
        ]))

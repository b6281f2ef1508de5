"""Cross-validation splitting and the per-fold training loop.

A fold is trained by repeatedly sampling foreground-biased patches from
the training cases, augmenting them, and stepping the network with
Nesterov SGD under a polynomial learning-rate schedule. Held-out cases
are never sampled (asserted per batch); the held-out fold is scored by
full-volume stitched Dice every ``validate_every`` epochs and at the
final epoch.

Every random draw derives from the single run seed through tagged
streams (init / sample / augment, keyed by fold, epoch, iteration,
batch slot), so a run is reproducible bit-for-bit from its manifest.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import unet
from .augment import AugmentConfig, augment_pair
from .errors import TrainingError
from .inference import InferConfig, make_model_fn, stitch_probabilities
from .losses import OptimizerConfig, dice_ce_loss, poly_lr, sgd_nesterov_step
from .metrics import overlap_metrics
from .patches import DEFAULT_FG_PROBABILITY, PatchSpec, sample_training_patch
from .preprocess import PreprocessConfig
from .rng import derive_rng, derive_seed_sequence
from .unet import NetParams, UNetConfig
from .volume import LabelMask, Volume3


@dataclass(frozen=True)
class FoldSplit:
    """Disjoint case-id folds of near-equal size, plus the seed used."""

    folds: tuple[tuple[str, ...], ...]
    seed: int

    def __post_init__(self):
        seen: set[str] = set()
        for fold in self.folds:
            if seen & set(fold):
                raise TrainingError("folds overlap")
            seen |= set(fold)
        sizes = [len(f) for f in self.folds]
        if sizes and max(sizes) - min(sizes) > 1:
            raise TrainingError(f"fold sizes differ by more than 1: {sizes}")

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def all_cases(self) -> tuple[str, ...]:
        return tuple(sorted(cid for fold in self.folds for cid in fold))

    def train_cases(self, fold_index: int) -> tuple[str, ...]:
        if not 0 <= fold_index < self.k:
            raise TrainingError(f"fold_index {fold_index} outside [0, {self.k})")
        held = set(self.folds[fold_index])
        return tuple(cid for cid in self.all_cases if cid not in held)


def split_folds(case_ids, k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded permutation of the sorted ids, dealt round-robin into k folds."""
    ids = sorted(str(c) for c in case_ids)
    if len(set(ids)) != len(ids):
        raise TrainingError("duplicate case ids")
    if k < 2:
        raise TrainingError(f"need k >= 2 folds, got {k}")
    if len(ids) < k:
        raise TrainingError(f"need at least {k} cases for {k} folds, got {len(ids)}")
    perm = derive_rng(seed, "split").permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    folds = tuple(tuple(sorted(shuffled[i::k])) for i in range(k))
    return FoldSplit(folds=folds, seed=seed)


@dataclass(frozen=True)
class TrainRunConfig:
    """Everything the training loop needs; all values land in the manifest."""

    patch: PatchSpec = PatchSpec((32, 32, 32), batch_size=2, num_resolutions=3)
    net: UNetConfig = UNetConfig(num_resolutions=3, base_channels=4)
    optimizer: OptimizerConfig = OptimizerConfig()
    augment: AugmentConfig = AugmentConfig()
    infer: InferConfig = InferConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    epochs: int = 50
    iterations_per_epoch: int = 25
    fg_probability: float = DEFAULT_FG_PROBABILITY
    validate_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.iterations_per_epoch < 1:
            raise TrainingError("epochs and iterations_per_epoch must be >= 1")
        if not 0.0 <= self.fg_probability <= 1.0:
            raise TrainingError(f"fg_probability must be in [0, 1], got {self.fg_probability}")
        if self.validate_every < 1:
            raise TrainingError(f"validate_every must be >= 1, got {self.validate_every}")
        if self.patch.num_resolutions != self.net.num_resolutions:
            raise TrainingError(
                f"patch spec has {self.patch.num_resolutions} resolutions, "
                f"net has {self.net.num_resolutions}"
            )


def _validate_fold(params: NetParams, cases, dataset, cfg: TrainRunConfig) -> float:
    model_fn = make_model_fn(params)
    dices = []
    for cid in cases:
        vol, mask = dataset[cid]
        probs = stitch_probabilities(model_fn, vol.voxels, cfg.patch, cfg.infer)
        pred = LabelMask((probs[1] >= 0.5).astype(np.uint8), vol.spacing, vol.origin)
        dices.append(overlap_metrics(pred, mask)[1])
    return float(np.mean(dices))


def train_fold(dataset: Mapping[str, tuple[Volume3, LabelMask]], split: FoldSplit,
               fold_index: int, cfg: TrainRunConfig,
               out_dir: str | Path | None = None):
    """Train one fold; returns (params, epoch_logs).

    ``dataset`` maps case id to a preprocessed (volume, mask) pair — the
    grids the patches are cut from. When ``out_dir`` is given, writes
    ``manifest.json``, ``epochs.jsonl`` and ``model.ckpt`` there.
    """
    val_ids = split.folds[fold_index]
    train_ids = split.train_cases(fold_index)
    if not train_ids:
        raise TrainingError("no training cases outside the held-out fold")
    missing = [cid for cid in split.all_cases if cid not in dataset]
    if missing:
        raise TrainingError(f"dataset is missing cases: {missing}")
    train_set = set(train_ids)
    assert not (train_set & set(val_ids)), "train/validation case leak"

    init_seed = int(derive_seed_sequence(cfg.seed, "init", fold_index).generate_state(1)[0])
    params = unet.init_params(cfg.net, seed=init_seed)
    fg_coords = {cid: np.argwhere(dataset[cid][1].voxels) for cid in train_ids}

    logs: list[dict] = []
    for epoch in range(cfg.epochs):
        lr = poly_lr(cfg.optimizer.lr0, epoch, cfg.epochs, cfg.optimizer.power)
        epoch_losses = []
        for it in range(cfg.iterations_per_epoch):
            images, labels = [], []
            for slot in range(cfg.patch.batch_size):
                rng = derive_rng(cfg.seed, "sample", fold_index, epoch, it, slot)
                cid = train_ids[int(rng.integers(len(train_ids)))]
                assert cid in train_set, "sampled a held-out case"
                vol, mask = dataset[cid]
                img, lab = sample_training_patch(
                    vol, mask, cfg.patch, rng, cfg.fg_probability, fg_coords[cid]
                )
                img, lab = augment_pair(
                    img, lab, cfg.augment,
                    derive_rng(cfg.seed, "augment", fold_index, epoch, it, slot),
                )
                images.append(img)
                labels.append(lab)
            x = np.stack(images)[:, None].astype(np.float32)
            y = np.stack(labels).astype(np.uint8)

            logits, tape = unet.forward(params, x, with_tape=True)
            report, dlogits = dice_ce_loss(logits, y)
            if not np.isfinite(report.total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} iteration {it}: {report}"
                )
            grads = unet.backward(params, tape, dlogits)
            sgd_nesterov_step(params, grads, lr, cfg.optimizer.momentum)
            epoch_losses.append(report.total)

        entry = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(epoch_losses))}
        if (epoch + 1) % cfg.validate_every == 0 or epoch == cfg.epochs - 1:
            entry["val_dice"] = _validate_fold(params, val_ids, dataset, cfg)
        logs.append(entry)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "config": asdict(cfg),
            "fold_index": fold_index,
            "split_seed": split.seed,
            "train_cases": list(train_ids),
            "val_cases": list(val_ids),
            "init_seed": init_seed,
            "checkpoint": "model.ckpt",
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        with open(out_dir / "epochs.jsonl", "w") as fh:
            for entry in logs:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        unet.save_checkpoint(params, out_dir / "model.ckpt", seed=cfg.seed,
                             epoch=cfg.epochs, extra={"fold": fold_index})
    return params, logs

"""Run configuration: a strict JSON document mapping onto module configs.

A run config has optional sections {preprocess, patch, net, optimizer,
augment, train, infer, metrics}, a seed, and paths. Unknown keys are
rejected (schema-validated with additionalProperties: false), every
value is range-checked twice — once by the shipped JSON schema, once by
the config dataclasses — and the fully resolved document (defaults
included) can be echoed so manifests round-trip to an equal config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .augment import AugmentConfig
from .errors import ConfigError
from .inference import InferConfig
from .losses import OptimizerConfig
from .patches import DEFAULT_FG_PROBABILITY, PatchSpec, validate_patch
from .preprocess import PreprocessConfig
from .training import TrainRunConfig
from .unet import UNetConfig


@dataclass(frozen=True)
class MetricsConfig:
    hd_percentile: float = 100.0

    def __post_init__(self):
        if not 0 < self.hd_percentile <= 100:
            raise ConfigError(f"hd_percentile must be in (0, 100], got {self.hd_percentile}")


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 50
    iterations_per_epoch: int = 25
    fg_probability: float = DEFAULT_FG_PROBABILITY
    validate_every: int = 10


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    preprocess: PreprocessConfig = PreprocessConfig()
    patch: PatchSpec = PatchSpec((32, 32, 32), batch_size=2, num_resolutions=3)
    net: UNetConfig = UNetConfig(num_resolutions=3, base_channels=4)
    optimizer: OptimizerConfig = OptimizerConfig()
    augment: AugmentConfig = AugmentConfig()
    train: TrainSection = TrainSection()
    infer: InferConfig = InferConfig()
    metrics: MetricsConfig = MetricsConfig()
    paths: dict = field(default_factory=dict)

    def train_config(self) -> TrainRunConfig:
        return TrainRunConfig(
            patch=self.patch,
            net=self.net,
            optimizer=self.optimizer,
            augment=self.augment,
            infer=self.infer,
            preprocess=self.preprocess,
            epochs=self.train.epochs,
            iterations_per_epoch=self.train.iterations_per_epoch,
            fg_probability=self.train.fg_probability,
            validate_every=self.train.validate_every,
            seed=self.seed,
        )


def _schema() -> dict:
    text = resources.files("aneuseg").joinpath("schema/runconfig.schema.json").read_text()
    return json.loads(text)


def validate_document(doc: dict) -> None:
    """Schema-validate a raw config dict; raises ConfigError on violation."""
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {path}: {exc.message}") from exc


def build_run_config(doc: dict) -> RunConfig:
    """Construct a RunConfig from a (validated) plain dict."""
    validate_document(doc)
    sections = dict(doc)

    def take(name):
        return dict(sections.pop(name, {}))

    pre = take("preprocess")
    if "target_spacing" in pre:
        pre["target_spacing"] = tuple(pre["target_spacing"])
    patch = take("patch")
    if "patch_size" in patch:
        patch["patch_size"] = tuple(patch["patch_size"])
    patch_defaults = {"patch_size": (32, 32, 32), "batch_size": 2,
                      "num_resolutions": 3, "min_bottleneck": 4}
    patch = {**patch_defaults, **patch}
    spec = validate_patch(patch["patch_size"], patch["num_resolutions"],
                          patch["min_bottleneck"], patch["batch_size"])

    net = take("net")
    augment = take("augment")
    for key in ("scale_range", "noise_sigma_range", "gamma_range"):
        if key in augment:
            augment[key] = tuple(augment[key])

    return RunConfig(
        seed=int(sections.pop("seed", 0)),
        preprocess=PreprocessConfig(**pre),
        patch=spec,
        net=UNetConfig(num_resolutions=spec.num_resolutions, **net),
        optimizer=OptimizerConfig(**take("optimizer")),
        augment=AugmentConfig(**augment),
        train=TrainSection(**take("train")),
        infer=InferConfig(**take("infer")),
        metrics=MetricsConfig(**take("metrics")),
        paths=take("paths"),
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return build_run_config(doc)


def resolved_document(cfg: RunConfig) -> dict:
    """The fully resolved config (all defaults applied) as a plain dict.

    ``build_run_config(resolved_document(cfg)) == cfg`` — manifests embed
    this echo so a run can be reproduced from the manifest alone.
    """
    return {
        "seed": cfg.seed,
        "preprocess": {
            "target_spacing": list(cfg.preprocess.target_spacing),
            "image_order": cfg.preprocess.image_order,
        },
        "patch": {
            "patch_size": list(cfg.patch.patch_size),
            "batch_size": cfg.patch.batch_size,
            "num_resolutions": cfg.patch.num_resolutions,
            "min_bottleneck": cfg.patch.min_bottleneck,
        },
        "net": {
            "base_channels": cfg.net.base_channels,
            "channel_cap": cfg.net.channel_cap,
            "norm": cfg.net.norm,
            "norm_eps": cfg.net.norm_eps,
            "leaky_slope": cfg.net.leaky_slope,
        },
        "optimizer": {
            "lr0": cfg.optimizer.lr0,
            "momentum": cfg.optimizer.momentum,
            "power": cfg.optimizer.power,
        },
        "augment": {
            "p_rotate": cfg.augment.p_rotate,
            "rotate_max_degrees": cfg.augment.rotate_max_degrees,
            "p_scale": cfg.augment.p_scale,
            "scale_range": list(cfg.augment.scale_range),
            "p_noise": cfg.augment.p_noise,
            "noise_sigma_range": list(cfg.augment.noise_sigma_range),
            "p_gamma": cfg.augment.p_gamma,
            "gamma_range": list(cfg.augment.gamma_range),
        },
        "train": {
            "epochs": cfg.train.epochs,
            "iterations_per_epoch": cfg.train.iterations_per_epoch,
            "fg_probability": cfg.train.fg_probability,
            "validate_every": cfg.train.validate_every,
        },
        "infer": {
            "overlap": cfg.infer.overlap,
            "sigma_scale": cfg.infer.sigma_scale,
        },
        "metrics": {"hd_percentile": cfg.metrics.hd_percentile},
        "paths": dict(cfg.paths),
    }

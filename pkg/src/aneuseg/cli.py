"""Command-line surface for the whole pipeline.

Subcommands: inspect, preprocess, plan, split, train, predict,
ensemble-predict, evaluate, report, render. Data goes to files or
stdout; diagnostics go to stderr. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, reporting
from .config import RunConfig, load_run_config, resolved_document
from .errors import AneusegError, ConfigError, NiftiError, ReportError
from .inference import InferConfig, ensemble_predict
from .metrics import compute_case_metrics
from .nifti import read_nifti, write_nifti
from .patches import PatchSpec, estimate_activation_memory, validate_patch
from .preprocess import PreprocessConfig, resample_image, resample_mask, znormalize
from .render import render_overlay
from .training import FoldSplit, split_folds, train_fold
from .unet import load_checkpoint
from .volume import LabelMask, Volume3

_NIFTI_SUFFIXES = (".nii", ".nii.gz")


def _triple(text: str, cast, flag: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{flag} expects three comma-separated values, got {text!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value in {flag}: {exc}") from exc


def _case_stem(path: Path) -> str:
    name = path.name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _scan_cases(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise NiftiError(f"not a directory: {directory}")
    found = {}
    for path in sorted(directory.iterdir()):
        if path.name.endswith(_NIFTI_SUFFIXES):
            found[_case_stem(path)] = path
    if not found:
        raise NiftiError(f"no NIfTI files in {directory}")
    return found


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _preprocess_cfg(args, run: RunConfig) -> PreprocessConfig:
    spacing = (tuple(_triple(args.target_spacing, float, "--target-spacing"))
               if getattr(args, "target_spacing", None) else run.preprocess.target_spacing)
    order = (args.image_order if getattr(args, "image_order", None) is not None
             else run.preprocess.image_order)
    return PreprocessConfig(spacing, order)


def _patch_spec(args, run: RunConfig, num_resolutions: int) -> PatchSpec:
    patch = (_triple(args.patch, int, "--patch") if getattr(args, "patch", None)
             else run.patch.patch_size)
    # inference accepts any divisible patch; bottleneck floor is a training concern
    return validate_patch(patch, num_resolutions, min_bottleneck=1,
                          batch_size=run.patch.batch_size)


def _infer_cfg(args, run: RunConfig) -> InferConfig:
    overlap = args.overlap if getattr(args, "overlap", None) is not None else run.infer.overlap
    sigma = (args.sigma_scale if getattr(args, "sigma_scale", None) is not None
             else run.infer.sigma_scale)
    return InferConfig(overlap, sigma)


# ---------------------------------------------------------------- subcommands


def _cmd_inspect(args) -> int:
    vol = read_nifti(args.path, as_label=args.label)
    info = {
        "path": str(args.path),
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "min": float(vol.voxels.min()),
        "max": float(vol.voxels.max()),
        "mean": float(vol.voxels.mean()),
    }
    if args.label:
        info["foreground_voxels"] = vol.foreground_count
        info["foreground_mm3"] = vol.foreground_volume_mm3
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return 0


def _cmd_preprocess(args) -> int:
    run = _load_config(args)
    cfg = _preprocess_cfg(args, run)
    steps = []
    if args.label:
        data = read_nifti(args.input, as_label=True)
        out = resample_mask(data, cfg)
        steps.append("resample_nearest")
    else:
        data = read_nifti(args.input)
        out = resample_image(data, cfg)
        steps.append(f"resample_order{cfg.image_order}")
        out = znormalize(out)
        steps.append("znormalize")
    write_nifti(out, args.output)
    manifest = {
        "input": str(args.input),
        "output": str(args.output),
        "steps": steps,  # applied in listed order
        "config": {"target_spacing": list(cfg.target_spacing),
                   "image_order": cfg.image_order},
        "input_dims": list(data.dims),
        "input_spacing_mm": list(data.spacing),
        "output_dims": list(out.dims),
        "output_spacing_mm": list(out.spacing),
    }
    if args.manifest:
        Path(args.manifest).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    else:
        print(json.dumps(manifest, indent=2, sort_keys=True), file=sys.stderr)
    return 0


def _cmd_plan(args) -> int:
    patch = _triple(args.patch, int, "--patch")
    spec = validate_patch(patch, args.resolutions, args.min_bottleneck, args.batch)
    bytes_total = estimate_activation_memory(spec, args.base_channels, args.channel_cap)
    print(json.dumps({
        "valid": True,
        "patch": list(spec.patch_size),
        "resolutions": spec.num_resolutions,
        "bottleneck": list(spec.bottleneck),
        "batch_size": spec.batch_size,
        "activation_bytes": bytes_total,
        "activation_gib": round(bytes_total / 2 ** 30, 3),
    }, indent=2))
    return 0


def _cmd_split(args) -> int:
    if args.cases:
        ids = [c for c in args.cases.split(",") if c]
    elif args.cases_file:
        ids = [line.strip() for line in Path(args.cases_file).read_text().splitlines()
               if line.strip()]
    elif args.data_dir:
        ids = sorted(_scan_cases(Path(args.data_dir)))
    else:
        raise ConfigError("one of --cases, --cases-file, --data-dir is required")
    split = split_folds(ids, k=args.folds, seed=args.seed)
    doc = {"seed": split.seed, "k": split.k, "folds": [list(f) for f in split.folds]}
    text = json.dumps(doc, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def _load_split(path) -> FoldSplit:
    doc = json.loads(Path(path).read_text())
    return FoldSplit(folds=tuple(tuple(f) for f in doc["folds"]), seed=int(doc["seed"]))


def _cmd_train(args) -> int:
    run = _load_config(args)
    cfg = run.train_config()
    images = _scan_cases(Path(args.data_dir))
    labels = _scan_cases(Path(args.labels_dir))
    missing = sorted(set(images) - set(labels))
    if missing:
        raise NiftiError(f"cases without labels: {missing}")

    dataset = {}
    for cid, img_path in sorted(images.items()):
        vol = znormalize(resample_image(read_nifti(img_path), cfg.preprocess))
        mask = resample_mask(read_nifti(labels[cid], as_label=True), cfg.preprocess)
        dataset[cid] = (vol, mask)

    if args.folds_file:
        split = _load_split(args.folds_file)
    else:
        split = split_folds(sorted(dataset), k=args.num_folds, seed=run.seed)

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(resolved_document(run), indent=2, sort_keys=True) + "\n")
    (out_dir / "folds.json").write_text(json.dumps(
        {"seed": split.seed, "k": split.k, "folds": [list(f) for f in split.folds]},
        indent=2) + "\n")

    fold_indices = range(split.k) if args.fold is None else [args.fold]
    for fold_index in fold_indices:
        print(f"training fold {fold_index} "
              f"({cfg.epochs} epochs x {cfg.iterations_per_epoch} iterations)",
              file=sys.stderr)
        train_fold(dataset, split, fold_index, cfg, out_dir / f"fold{fold_index}")
    return 0


def _predict_common(args, checkpoint_paths: list[str]) -> int:
    run = _load_config(args)
    models = []
    for path in checkpoint_paths:
        params, _ = load_checkpoint(path)
        models.append(params)
    spec = _patch_spec(args, run, models[0].config.num_resolutions)
    vol = read_nifti(args.input)
    mask, prob = ensemble_predict(models, vol, spec, _preprocess_cfg(args, run),
                                  _infer_cfg(args, run))
    write_nifti(mask, args.output)
    if args.prob:
        write_nifti(prob, args.prob)
    return 0


def _cmd_predict(args) -> int:
    return _predict_common(args, [args.checkpoint])


def _cmd_ensemble_predict(args) -> int:
    return _predict_common(args, list(args.checkpoints))


def _cmd_evaluate(args) -> int:
    run = _load_config(args)
    hd_percentile = (args.hd_percentile if args.hd_percentile is not None
                     else run.metrics.hd_percentile)
    preds = _scan_cases(Path(args.pred_dir))
    refs = _scan_cases(Path(args.ref_dir))
    missing = sorted(set(preds) - set(refs))
    if missing:
        raise NiftiError(f"predictions without references: {missing}")

    per_case = []
    for cid in sorted(preds):
        pred = read_nifti(preds[cid], as_label=True)
        ref = read_nifti(refs[cid], as_label=True)
        per_case.append((cid, compute_case_metrics(pred, ref, hd_percentile)))

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_per_case_csv(per_case, out_dir / "per_case.csv")
    cohort, note = reporting.evaluate_cohort([cm for _, cm in per_case])
    reporting.write_cohort_json(cohort, out_dir / "cohort.json", pearson_note=note,
                                conventions={
                                    "both_empty_overlap": 1.0,
                                    "hd_percentile": hd_percentile,
                                    "surface_connectivity": 6,
                                    "volume_bias": "mean(pred - ref), mm^3",
                                })
    print(f"evaluated {len(per_case)} cases -> {out_dir}", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    print(reporting.report(args.run_dir), end="")
    return 0


def _cmd_render(args) -> int:
    vol = read_nifti(args.input)
    if args.mask:
        mask = read_nifti(args.mask, as_label=True)
    else:
        mask = LabelMask(np.zeros(vol.dims, dtype=np.uint8), vol.spacing, vol.origin)
    render_overlay(vol, mask, args.axis, args.index, args.output)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aneuseg",
        description="Desk-scale 3D aneurysm segmentation pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("inspect", help="print NIfTI header and intensity summary")
    p.add_argument("path")
    p.add_argument("--label", action="store_true", help="treat the file as a binary mask")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("preprocess", help="resample to target spacing and z-normalize")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--label", action="store_true", help="nearest-neighbor mask path")
    p.add_argument("--config")
    p.add_argument("--target-spacing", help="A,B,C in mm")
    p.add_argument("--image-order", type=int, choices=(0, 1, 3))
    p.add_argument("--manifest", help="write the step manifest JSON here")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("plan", help="validate patch geometry and estimate memory")
    p.add_argument("--patch", required=True, help="X,Y,Z voxels")
    p.add_argument("--resolutions", type=int, default=6)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--min-bottleneck", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--channel-cap", type=int, default=320)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("split", help="deterministic k-fold case split")
    p.add_argument("--cases", help="comma-separated case ids")
    p.add_argument("--cases-file", help="file with one case id per line")
    p.add_argument("--data-dir", help="derive case ids from NIfTI stems")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train cross-validation folds")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--fold", type=int, help="train only this fold index")
    p.add_argument("--folds-file", help="use an existing folds.json")
    p.add_argument("--num-folds", type=int, default=5)
    p.set_defaults(func=_cmd_train)

    for name, handler in (("predict", _cmd_predict),
                          ("ensemble-predict", _cmd_ensemble_predict)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} a volume")
        if name == "predict":
            p.add_argument("--checkpoint", required=True)
        else:
            p.add_argument("--checkpoints", nargs="+", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--prob", help="also write the foreground probability volume")
        p.add_argument("--config")
        p.add_argument("--patch", help="X,Y,Z voxels")
        p.add_argument("--target-spacing")
        p.add_argument("--image-order", type=int, choices=(0, 1, 3))
        p.add_argument("--overlap", type=float)
        p.add_argument("--sigma-scale", type=float)
        p.set_defaults(func=handler)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--hd-percentile", type=float)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="render fold table and cohort summary")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("render", help="write a PGM slice with mask boundary overlay")
    p.add_argument("--input", required=True)
    p.add_argument("--mask")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own usage message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except AneusegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

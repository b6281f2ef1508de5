"""Aggregation tables and the plain-text/CSV report layer.

The fold table lists one row per fold (unweighted mean of that fold's
cases) plus an AVG row that is the mean over ALL cases — case-weighted,
which coincides with the mean of fold means only for equal-size folds.
Rendered tables round to 4 decimals; a full-precision sidecar retains
the unrounded values, and rendered values are always the rounded
sidecar values, never re-derived.

CSV dialect everywhere: comma separators, '.' decimal point, LF line
endings, mandatory header row.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import MetricsError, ReportError
from .metrics import CaseMetrics, CohortMetrics, pearson_r, volume_stats

TABLE_COLUMNS = ("Fold", "Jaccard", "Dice", "Precision", "Recall")
PER_CASE_COLUMNS = ("case_id", "jaccard", "dice", "precision", "recall",
                    "hausdorff_mm", "mean_distance_mm", "vol_pred_mm3", "vol_ref_mm3")


def _mean_row(label: str, cases: list[CaseMetrics]) -> dict:
    return {
        "fold": label,
        "jaccard": float(np.mean([c.jaccard for c in cases])),
        "dice": float(np.mean([c.dice for c in cases])),
        "precision": float(np.mean([c.precision for c in cases])),
        "recall": float(np.mean([c.recall for c in cases])),
        "n_cases": len(cases),
    }


def aggregate_table(per_case: list[tuple[str, CaseMetrics]],
                    fold_of: Mapping[str, int]) -> list[dict]:
    """Per-fold mean rows plus a case-weighted AVG row.

    Case order does not matter: cases are grouped and averaged in
    case-id order.
    """
    if not per_case:
        raise ReportError("no cases to aggregate")
    missing = sorted(cid for cid, _ in per_case if cid not in fold_of)
    if missing:
        raise ReportError(f"missing fold assignment for cases: {missing}")
    ordered = sorted(per_case, key=lambda item: item[0])
    by_fold: dict[int, list[CaseMetrics]] = {}
    for cid, cm in ordered:
        by_fold.setdefault(int(fold_of[cid]), []).append(cm)
    rows = [_mean_row(f"fold{idx}", cases) for idx, cases in sorted(by_fold.items())]
    rows.append(_mean_row("AVG", [cm for _, cm in ordered]))
    return rows


def write_table_csv(rows: list[dict], path: str | Path,
                    full_path: str | Path | None = None) -> None:
    """Write the fold table, 4-decimal rounded; optionally a full-precision
    sidecar with identical layout."""
    def dump(target: Path, fmt):
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS)
            for row in rows:
                writer.writerow([row["fold"]] + [fmt(row[k.lower()]) for k in TABLE_COLUMNS[1:]])

    dump(Path(path), lambda v: f"{v:.4f}")
    if full_path is not None:
        dump(Path(full_path), lambda v: repr(float(v)))


def render_table(rows: list[dict]) -> str:
    """Fixed-width text rendering of the fold table (4 decimals)."""
    lines = ["  ".join(f"{c:>9}" for c in TABLE_COLUMNS)]
    for row in rows:
        cells = [f"{row['fold']:>9}"] + [f"{row[c.lower()]:>9.4f}" for c in TABLE_COLUMNS[1:]]
        lines.append("  ".join(cells))
    return "\n".join(lines)


def write_per_case_csv(per_case: list[tuple[str, CaseMetrics]], path: str | Path) -> None:
    """Full-precision per-case metric rows; blank cells for undefined
    distances."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PER_CASE_COLUMNS)
        for cid, cm in sorted(per_case, key=lambda item: item[0]):
            record = asdict(cm)
            writer.writerow([cid] + [
                "" if record[col] is None else repr(float(record[col]))
                for col in PER_CASE_COLUMNS[1:]
            ])


def read_per_case_csv(path: str | Path) -> list[tuple[str, CaseMetrics]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(PER_CASE_COLUMNS):
            raise ReportError(f"unexpected columns in {path}: {reader.fieldnames}")
        for row in reader:
            values = {col: (None if row[col] == "" else float(row[col]))
                      for col in PER_CASE_COLUMNS[1:]}
            out.append((row["case_id"], CaseMetrics(**values)))
    return out


def evaluate_cohort(cases: list[CaseMetrics]):
    """(CohortMetrics, note): Pearson recorded as None plus a note when
    undefined instead of failing the whole evaluation."""
    cohort = volume_stats(cases, strict=False)
    note = None
    if cohort.volume_pearson_r is None:
        try:
            pearson_r([c.vol_pred_mm3 for c in cases], [c.vol_ref_mm3 for c in cases])
        except MetricsError as exc:
            note = f"undefined ({exc})"
    return cohort, note


def write_cohort_json(cohort: CohortMetrics | None, path: str | Path,
                      pearson_note: str | None = None,
                      conventions: dict | None = None) -> None:
    doc = {"cohort": None if cohort is None else asdict(cohort)}
    if pearson_note:
        doc["pearson_note"] = pearson_note
    doc["conventions"] = conventions or {
        "both_empty_overlap": 1.0,
        "hd_percentile": 100.0,
        "surface_connectivity": 6,
        "volume_bias": "mean(pred - ref), mm^3",
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt_cohort_value(value, suffix: str = "") -> str:
    return "undefined" if value is None else f"{value:.4f}{suffix}"


def report(run_dir: str | Path, fold_of: Mapping[str, int] | None = None) -> str:
    """Render the fold table and cohort block for an evaluated run.

    Expects ``per_case.csv`` and ``cohort.json`` in ``run_dir`` (written
    by the evaluate step) and optionally ``folds.json`` (written by the
    split step) for fold assignments; without one, all cases form a
    single fold. Writes ``table.csv`` and ``table_full.csv`` into
    ``run_dir`` and returns the text report.
    """
    run_dir = Path(run_dir)
    per_case_path = run_dir / "per_case.csv"
    cohort_path = run_dir / "cohort.json"
    missing = [str(p) for p in (per_case_path, cohort_path) if not p.exists()]
    if missing:
        raise ReportError(f"missing evaluation outputs: {', '.join(missing)}")

    per_case = read_per_case_csv(per_case_path)
    cohort_doc = json.loads(cohort_path.read_text())

    if fold_of is None:
        folds_path = run_dir / "folds.json"
        if folds_path.exists():
            folds_doc = json.loads(folds_path.read_text())
            fold_of = {cid: idx for idx, fold in enumerate(folds_doc["folds"])
                       for cid in fold}
        else:
            fold_of = {cid: 0 for cid, _ in per_case}

    rows = aggregate_table(per_case, fold_of)
    write_table_csv(rows, run_dir / "table.csv", run_dir / "table_full.csv")

    cohort = cohort_doc.get("cohort")
    note = cohort_doc.get("pearson_note")
    lines = [render_table(rows), ""]
    if cohort:
        lines += [
            f"Cases:            {cohort['n_cases']}",
            f"Jaccard mean:     {cohort['mean_jaccard']:.4f}",
            f"Volume bias:      {cohort['volume_bias_mm3']:.4f} mm^3",
            f"Mean distance:    {_fmt_cohort_value(cohort['mean_mean_distance_mm'], ' mm')}",
            f"Volume Pearson R: "
            + (note or _fmt_cohort_value(cohort['volume_pearson_r'])),
            f"Hausdorff mean:   {_fmt_cohort_value(cohort['mean_hausdorff_mm'], ' mm')}",
        ]
    elif note:
        lines.append(f"Cohort: {note}")
    return "\n".join(lines) + "\n"

"""Segmentation metrics: overlap scores, surface distances, volume stats.

Conventions (recorded in evaluation output metadata):

* both masks empty -> jaccard = dice = precision = recall = 1 (perfect
  agreement); an empty prediction against a nonempty reference scores
  jaccard = dice = recall = 0 with precision = 1 (no false positives),
  and symmetrically for an empty reference, so that
  precision(pred, ref) == recall(ref, pred) always holds;
* surfaces are foreground voxels with at least one background 6-neighbor,
  with out-of-bounds counting as background;
* "hausdorff" is the full symmetric maximum (percentile 100 by default);
  "mean distance" is the average symmetric surface distance — the mean
  over the union of both directed surface-distance lists;
* distances are undefined (an error here, recorded as missing upstream)
  when either mask is empty;
* volumes are foreground voxel count times voxel volume, in mm^3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyMaskError, MetricsError
from .volume import LabelMask, require_same_geometry

_CDIST_CHUNK = 4096


@dataclass(frozen=True)
class CaseMetrics:
    jaccard: float
    dice: float
    precision: float
    recall: float
    hausdorff_mm: float | None
    mean_distance_mm: float | None
    vol_pred_mm3: float
    vol_ref_mm3: float


@dataclass(frozen=True)
class CohortMetrics:
    n_cases: int
    volume_bias_mm3: float
    volume_pearson_r: float | None
    mean_jaccard: float
    mean_dice: float
    mean_precision: float
    mean_recall: float
    mean_hausdorff_mm: float | None
    mean_mean_distance_mm: float | None
    n_distance_cases: int


def overlap_metrics(pred: LabelMask, ref: LabelMask):
    """(jaccard, dice, precision, recall) from voxel counts TP/FP/FN."""
    require_same_geometry(pred, ref)
    p = pred.voxels.astype(bool)
    r = ref.voxels.astype(bool)
    tp = float(np.count_nonzero(p & r))
    fp = float(np.count_nonzero(p & ~r))
    fn = float(np.count_nonzero(~p & r))

    union = tp + fp + fn
    jaccard = tp / union if union > 0 else 1.0
    dice = 2.0 * tp / (2.0 * tp + fp + fn) if union > 0 else 1.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return jaccard, dice, precision, recall


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Boolean array marking foreground voxels with a background 6-neighbor."""
    fg = mask.astype(bool)
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = fg.copy()
    for axis in range(3):
        lo = np.take(padded, range(0, mask.shape[axis]), axis=axis)
        hi = np.take(padded, range(2, mask.shape[axis] + 2), axis=axis)
        sl = [slice(1, 1 + s) for s in mask.shape]
        sl[axis] = slice(None)
        interior &= lo[tuple(sl)] & hi[tuple(sl)]
    return fg & ~interior


def _directed_min_distances(points_a: np.ndarray, points_b: np.ndarray):
    """min-distance from every a to the set b, and the columnwise mins back."""
    mins_a = np.empty(len(points_a), dtype=np.float64)
    mins_b = np.full(len(points_b), np.inf, dtype=np.float64)
    for start in range(0, len(points_a), _CDIST_CHUNK):
        block = cdist(points_a[start:start + _CDIST_CHUNK], points_b)
        mins_a[start:start + _CDIST_CHUNK] = block.min(axis=1)
        np.minimum(mins_b, block.min(axis=0), out=mins_b)
    return mins_a, mins_b


def surface_distances(pred: LabelMask, ref: LabelMask, hd_percentile: float = 100.0):
    """(hausdorff_mm, mean_distance_mm) between the two mask surfaces.

    Exact brute force over all surface-point pairs, chunked to bound
    memory. ``hd_percentile`` < 100 selects the percentile Hausdorff
    variant; the default is the true maximum.
    """
    require_same_geometry(pred, ref)
    if pred.foreground_count == 0 or ref.foreground_count == 0:
        raise EmptyMaskError("surface distances are undefined for an empty mask")
    if not 0 < hd_percentile <= 100:
        raise MetricsError(f"hd_percentile must be in (0, 100], got {hd_percentile}")

    spacing = np.asarray(pred.spacing, dtype=np.float64)
    pts_p = np.argwhere(surface_voxels(pred.voxels)).astype(np.float64) * spacing
    pts_r = np.argwhere(surface_voxels(ref.voxels)).astype(np.float64) * spacing
    d_pr, d_rp = _directed_min_distances(pts_p, pts_r)

    if hd_percentile == 100.0:
        hausdorff = max(float(d_pr.max()), float(d_rp.max()))
    else:
        hausdorff = max(float(np.percentile(d_pr, hd_percentile)),
                        float(np.percentile(d_rp, hd_percentile)))
    mean_distance = float(np.concatenate([d_pr, d_rp]).mean())
    return hausdorff, mean_distance


def compute_case_metrics(pred: LabelMask, ref: LabelMask,
                         hd_percentile: float = 100.0) -> CaseMetrics:
    """All per-case metrics; distances are None when either mask is empty."""
    jaccard, dice, precision, recall = overlap_metrics(pred, ref)
    if pred.foreground_count > 0 and ref.foreground_count > 0:
        hausdorff, mean_distance = surface_distances(pred, ref, hd_percentile)
    else:
        hausdorff, mean_distance = None, None
    return CaseMetrics(
        jaccard=jaccard, dice=dice, precision=precision, recall=recall,
        hausdorff_mm=hausdorff, mean_distance_mm=mean_distance,
        vol_pred_mm3=pred.foreground_volume_mm3, vol_ref_mm3=ref.foreground_volume_mm3,
    )


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise MetricsError(f"pearson requires two sequences of >= 2 values, got {len(x)}, {len(y)}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise MetricsError("pearson undefined for a constant volume sequence")
    return float(xc @ yc) / np.sqrt(sxx * syy)


def volume_stats(cases: list[CaseMetrics], strict: bool = True) -> CohortMetrics:
    """Cohort aggregation: signed volume bias, volume Pearson R, means.

    Distance means cover only cases where distances are defined; their
    count is reported alongside. When Pearson is undefined (fewer than
    two cases, or a constant volume sequence) strict mode raises; the
    non-strict mode reports it as None so callers can record "undefined".
    """
    if not cases:
        raise MetricsError("cohort statistics require at least one case")
    vp = [c.vol_pred_mm3 for c in cases]
    vr = [c.vol_ref_mm3 for c in cases]
    bias = float(np.mean(np.asarray(vp) - np.asarray(vr)))
    try:
        r = pearson_r(vp, vr)
    except MetricsError:
        if strict:
            raise
        r = None

    with_dist = [c for c in cases if c.hausdorff_mm is not None]
    return CohortMetrics(
        n_cases=len(cases),
        volume_bias_mm3=bias,
        volume_pearson_r=r,
        mean_jaccard=float(np.mean([c.jaccard for c in cases])),
        mean_dice=float(np.mean([c.dice for c in cases])),
        mean_precision=float(np.mean([c.precision for c in cases])),
        mean_recall=float(np.mean([c.recall for c in cases])),
        mean_hausdorff_mm=(float(np.mean([c.hausdorff_mm for c in with_dist]))
                           if with_dist else None),
        mean_mean_distance_mm=(float(np.mean([c.mean_distance_mm for c in with_dist]))
                               if with_dist else None),
        n_distance_cases=len(with_dist),
    )

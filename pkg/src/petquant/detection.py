"""Lesion detection scoring against ground truth.

A ground-truth lesion counts as detected (TP) only when some predicted
lesion contains the voxel holding that lesion's maximum SUV: overlap that
misses the hottest voxel does not count. Predicted lesions that detect no
ground-truth lesion are false positives; undetected ground-truth lesions
are false negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import Lesion
from .volume import LabelMask, ScalarVolume, VolumeKind


@dataclass(frozen=True)
class DetectionOutcome:
    tp: int
    fp: int
    fn: int
    matches: tuple[tuple[int, int], ...]  # (gt_index, pred_index) pairs


@dataclass(frozen=True)
class CohortSummary:
    mean: float
    std: float
    median: float
    iqr: tuple[float, float]


def _hottest_voxel(volume: ScalarVolume, lesion: Lesion, dims) -> tuple[int, int, int]:
    """Voxel of the lesion with maximal SUV; ties break to the smallest
    x-fastest scan index, so the choice is deterministic and spacing-free."""
    vox = lesion.voxels
    if vox[:, 0].max() >= dims[0] or vox[:, 1].max() >= dims[1] or vox[:, 2].max() >= dims[2]:
        raise ValueError("lesion voxel out of grid bounds")
    vals = volume.data[vox[:, 0], vox[:, 1], vox[:, 2]]
    best = np.flatnonzero(vals == vals.max())
    scan = vox[best, 0] + dims[0] * (vox[best, 1] + dims[1] * vox[best, 2])
    winner = best[int(np.argmin(scan))]
    return tuple(int(c) for c in vox[winner])


def match_lesions(volume: ScalarVolume, gt: list[Lesion],
                  pred: list[Lesion]) -> DetectionOutcome:
    """Score predicted lesions against ground truth by the hottest-voxel rule.

    Each ground-truth lesion is matched to the predicted lesion covering its
    SUVmax voxel, if any. A single predicted lesion may satisfy several
    ground-truth lesions (each criterion holds independently); it is a false
    positive only if it matches none.
    """
    if volume.kind is not VolumeKind.SUV:
        raise ValueError(f"expected an SUV volume, got {volume.kind.value}")
    dims = volume.dims

    pred_label = np.zeros(dims, dtype=np.int32)
    for idx, lesion in enumerate(pred):
        vox = lesion.voxels
        if vox[:, 0].max() >= dims[0] or vox[:, 1].max() >= dims[1] or vox[:, 2].max() >= dims[2]:
            raise ValueError("lesion voxel out of grid bounds")
        pred_label[vox[:, 0], vox[:, 1], vox[:, 2]] = idx + 1

    matches = []
    matched_preds = set()
    for g_idx, lesion in enumerate(gt):
        i, j, k = _hottest_voxel(volume, lesion, dims)
        p = int(pred_label[i, j, k])
        if p > 0:
            matches.append((g_idx, p - 1))
            matched_preds.add(p - 1)

    tp = len(matches)
    fn = len(gt) - tp
    fp = len(pred) - len(matched_preds)
    return DetectionOutcome(tp=tp, fp=fp, fn=fn, matches=tuple(matches))


def f1_score(outcome: DetectionOutcome) -> float | None:
    """F1 = TP / (TP + (FP + FN) / 2); None when all counts are zero
    (undefined; callers exclude it from cohort averages)."""
    denom = outcome.tp + 0.5 * (outcome.fp + outcome.fn)
    if denom == 0:
        return None
    return outcome.tp / denom


def dice_coefficient(gt: LabelMask, pred: LabelMask) -> float:
    """Voxel overlap 2|G n P| / (|G| + |P|); 1.0 when both masks are empty."""
    if gt.dims != pred.dims or gt.spacing != pred.spacing:
        raise ValueError("dice_coefficient requires masks on the same grid")
    g = gt.data.astype(bool)
    p = pred.data.astype(bool)
    denom = int(g.sum()) + int(p.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(g, p).sum()) / denom


def cohort_summary(values: list[float] | np.ndarray) -> CohortSummary:
    """Mean, population std, median and linearly interpolated quartiles."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cohort_summary needs at least one value")
    q25, q75 = np.quantile(arr, [0.25, 0.75], method="linear")
    return CohortSummary(
        mean=float(arr.mean()),
        std=float(arr.std()),  # population (divide by n)
        median=float(np.median(arr)),
        iqr=(float(q25), float(q75)),
    )

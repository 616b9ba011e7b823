"""Per-lesion and patient-level clinical metrics from a paired SUV volume and mask.

Six patient-level quantities are produced: SUVmean, SUVmax, total tumor
volume (TMTV, cm^3), total lesion activity (TLA, SUV*cm^3), lesion
dissemination (Dmax, cm) and lesion count. Patient-level SUV statistics
range over the union of all lesion voxels; Dmax ranges over all pairs of
foreground voxels regardless of which lesion they belong to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .components import Lesion, connected_components
from .volume import (
    Connectivity,
    DEFAULT_CONNECTIVITY,
    LabelMask,
    ScalarVolume,
    VolumeKind,
    check_same_grid,
)


@dataclass(frozen=True)
class LesionMetrics:
    suv_mean: float
    suv_max: float
    volume_cc: float
    tla: float


@dataclass(frozen=True)
class PatientMetrics:
    suv_mean: float
    suv_max: float
    tmtv: float
    tla: float
    dmax: float
    lesion_count: int

    @classmethod
    def zero(cls) -> "PatientMetrics":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0)


def _require_suv(volume: ScalarVolume) -> None:
    if volume.kind is not VolumeKind.SUV:
        raise ValueError(f"expected an SUV volume, got {volume.kind.value}")


def suv_mean(volume: ScalarVolume, mask: LabelMask) -> float:
    """Mean SUV over masked voxels; 0 for an empty mask (denominator max(n, 1))."""
    _require_suv(volume)
    check_same_grid(volume, mask)
    total = float((volume.data * mask.data).sum(dtype=np.float64))
    count = mask.foreground_count()
    return total / max(count, 1)


def suv_max(volume: ScalarVolume, mask: LabelMask) -> float:
    """Max of SUV*mask over all voxels; 0 for an empty mask since SUV >= 0."""
    _require_suv(volume)
    check_same_grid(volume, mask)
    return float((volume.data * mask.data).max())


def tmtv(mask: LabelMask) -> float:
    """Total mask volume in cm^3: voxel volume (mm^3) / 1000 times voxel count."""
    return mask.spacing.voxel_volume_mm3() / 1000.0 * mask.foreground_count()


def lesion_metrics(volume: ScalarVolume, lesion: Lesion) -> LesionMetrics:
    """SUV statistics and volume of one lesion."""
    _require_suv(volume)
    vals = volume.data[lesion.voxels[:, 0], lesion.voxels[:, 1], lesion.voxels[:, 2]]
    mean = float(vals.sum(dtype=np.float64)) / lesion.voxel_count
    vol_cc = lesion.volume_cc()
    return LesionMetrics(
        suv_mean=mean,
        suv_max=float(vals.max()),
        volume_cc=vol_cc,
        tla=mean * vol_cc,
    )


def tla(volume: ScalarVolume, lesions: list[Lesion]) -> float:
    """Total lesion activity: sum over lesions of mean SUV times volume (cm^3)."""
    return sum(lesion_metrics(volume, les).tla for les in lesions)


def _diameter_mm(points: np.ndarray) -> float:
    """Exact maximum pairwise Euclidean distance of an (n, 3) point cloud.

    The farthest pair lies on the convex hull, so for large clouds we only
    scan hull vertices. Degenerate (coplanar/collinear) clouds are projected
    onto their affine span first, where the hull is well defined; distances
    are preserved because the projection is orthonormal.
    """
    n = points.shape[0]
    if n <= 2:
        return 0.0 if n < 2 else float(np.linalg.norm(points[1] - points[0]))

    centered = points - points.mean(axis=0)
    # orthonormal basis of the affine span
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(float(svals[0]), 1.0)
    rank = int(np.sum(svals > 1e-9 * scale))
    if rank == 0:
        return 0.0
    if rank == 1:
        t = centered @ vt[0]
        return float(t.max() - t.min())
    projected = centered if rank == 3 else centered @ vt[:rank].T
    try:
        hull_vertices = projected[ConvexHull(projected).vertices]
    except QhullError:
        hull_vertices = projected  # tiny/near-degenerate input: scan everything
    return _pairwise_max(hull_vertices)


def _pairwise_max(points: np.ndarray, chunk: int = 1024) -> float:
    best = 0.0
    for start in range(0, points.shape[0], chunk):
        block = points[start : start + chunk]
        d2 = ((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def dmax(mask: LabelMask) -> float:
    """Lesion dissemination: max spacing-weighted distance between any two
    foreground voxels, in centimeters (mm / 10). Zero for < 2 voxels."""
    voxels = mask.foreground_voxels()
    if voxels.shape[0] < 2:
        return 0.0
    points = voxels.astype(np.float64) * mask.spacing.as_array()
    return _diameter_mm(points) / 10.0


def lesion_count(mask: LabelMask,
                 connectivity: Connectivity = DEFAULT_CONNECTIVITY) -> int:
    return len(connected_components(mask, connectivity))


def patient_metrics(volume: ScalarVolume, mask: LabelMask,
                    connectivity: Connectivity = DEFAULT_CONNECTIVITY) -> PatientMetrics:
    """All six patient-level metrics for one (volume, mask) pair."""
    _require_suv(volume)
    check_same_grid(volume, mask)
    lesions = connected_components(mask, connectivity)
    if not lesions:
        return PatientMetrics.zero()
    return PatientMetrics(
        suv_mean=suv_mean(volume, mask),
        suv_max=suv_max(volume, mask),
        tmtv=tmtv(mask),
        tla=tla(volume, lesions),
        dmax=dmax(mask),
        lesion_count=len(lesions),
    )

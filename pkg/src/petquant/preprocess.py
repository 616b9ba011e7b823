"""Preprocessing: CT clip/normalize, grid resampling, fold-ensemble voting."""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .volume import LabelMask, ScalarVolume, VolumeKind, VoxelSpacing

# Hounsfield clip range applied before normalizing CT to [0, 1].
CT_CLIP_MIN = -1000.0
CT_CLIP_MAX = 3000.0

# Majority-vote default: a voxel is a lesion when at least 3 of 5 fold
# models predict it.
DEFAULT_VOTE_THRESHOLD = 3


class ResampleMode(Enum):
    TRILINEAR = "TRILINEAR"
    NEAREST = "NEAREST"


def ct_preprocess(volume: ScalarVolume) -> ScalarVolume:
    """Clip HU values to [-1000, 3000] and rescale linearly to [0, 1]."""
    if volume.kind is not VolumeKind.HU:
        raise ValueError(f"ct_preprocess expects an HU volume, got {volume.kind.value}")
    clipped = np.clip(volume.data, CT_CLIP_MIN, CT_CLIP_MAX)
    normalized = (clipped - CT_CLIP_MIN) / (CT_CLIP_MAX - CT_CLIP_MIN)
    return ScalarVolume(data=normalized, spacing=volume.spacing, kind=VolumeKind.NORMALIZED)


def _output_dims(dims: tuple[int, int, int], spacing: VoxelSpacing,
                 target: VoxelSpacing) -> tuple[int, int, int]:
    """ceil(dim * spacing / target) per axis, snapping away float noise."""
    out = []
    for n, s, t in zip(dims, spacing.as_array(), target.as_array()):
        x = n * s / t
        nearest = round(x)
        if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
            out.append(max(1, int(nearest)))
        else:
            out.append(max(1, int(math.ceil(x))))
    return tuple(out)  # type: ignore[return-value]


def _source_coords(out_dims, spacing: VoxelSpacing, target: VoxelSpacing):
    """Fractional input-index coordinate of each output voxel center, per axis.

    Output voxel center o sits at (o + 0.5) * target mm; its input-index
    coordinate is that position divided by the input spacing minus the
    half-voxel offset, clamped to the grid (edge-clamp boundary policy).
    """
    coords = []
    for n_out, s, t in zip(out_dims, spacing.as_array(), target.as_array()):
        u = ((np.arange(n_out, dtype=np.float64) + 0.5) * t) / s - 0.5
        # snap float noise so identity resampling reproduces the input exactly
        nearest = np.round(u)
        u = np.where(np.abs(u - nearest) < 1e-9, nearest, u)
        coords.append(u)
    return coords


def _trilinear(data: np.ndarray, coords) -> np.ndarray:
    n = data.shape
    idx0, frac = [], []
    for axis, u in enumerate(coords):
        u = np.clip(u, 0.0, n[axis] - 1.0)
        i0 = np.floor(u).astype(np.intp)
        i0 = np.minimum(i0, n[axis] - 1)
        idx0.append(i0)
        frac.append(u - i0)

    x0, y0, z0 = np.ix_(idx0[0], idx0[1], idx0[2])
    x1 = np.minimum(x0 + 1, n[0] - 1)
    y1 = np.minimum(y0 + 1, n[1] - 1)
    z1 = np.minimum(z0 + 1, n[2] - 1)
    fx, fy, fz = np.ix_(frac[0], frac[1], frac[2])

    out = (
        data[x0, y0, z0] * (1 - fx) * (1 - fy) * (1 - fz)
        + data[x1, y0, z0] * fx * (1 - fy) * (1 - fz)
        + data[x0, y1, z0] * (1 - fx) * fy * (1 - fz)
        + data[x0, y0, z1] * (1 - fx) * (1 - fy) * fz
        + data[x1, y1, z0] * fx * fy * (1 - fz)
        + data[x1, y0, z1] * fx * (1 - fy) * fz
        + data[x0, y1, z1] * (1 - fx) * fy * fz
        + data[x1, y1, z1] * fx * fy * fz
    )
    return out


def _nearest(data: np.ndarray, coords) -> np.ndarray:
    idx = []
    for axis, u in enumerate(coords):
        i = np.floor(u + 0.5).astype(np.intp)  # round half up, deterministic
        idx.append(np.clip(i, 0, data.shape[axis] - 1))
    return data[np.ix_(idx[0], idx[1], idx[2])]


def resample(image: ScalarVolume | LabelMask, target: VoxelSpacing,
             mode: ResampleMode | None = None) -> ScalarVolume | LabelMask:
    """Resample a volume or mask onto a new spacing.

    Volumes use trilinear interpolation, masks nearest-neighbor (so labels
    stay binary). The output grid is anchored at the input origin with
    ceil-scaled extent; sampling outside the input is edge-clamped.
    """
    is_mask = isinstance(image, LabelMask)
    if mode is None:
        mode = ResampleMode.NEAREST if is_mask else ResampleMode.TRILINEAR
    if is_mask and mode is ResampleMode.TRILINEAR:
        raise ValueError("TRILINEAR resampling would break mask label integrity; use NEAREST")

    out_dims = _output_dims(image.dims, image.spacing, target)
    coords = _source_coords(out_dims, image.spacing, target)
    if mode is ResampleMode.NEAREST:
        out = _nearest(image.data, coords)
    else:
        out = _trilinear(image.data, coords)

    if is_mask:
        return LabelMask(data=out.astype(np.uint8), spacing=target)
    return ScalarVolume(data=out, spacing=target, kind=image.kind)


def majority_vote(masks: list[LabelMask], threshold: int | None = None) -> LabelMask:
    """Voxelwise ensemble vote: output is 1 where >= threshold masks are 1.

    With five inputs the default threshold is 3; otherwise it defaults to a
    strict majority (floor(n/2) + 1).
    """
    if not masks:
        raise ValueError("majority_vote needs at least one mask")
    first = masks[0]
    for m in masks[1:]:
        if m.dims != first.dims or m.spacing != first.spacing:
            raise ValueError("majority_vote inputs must share dims and spacing")
    n = len(masks)
    if threshold is None:
        threshold = DEFAULT_VOTE_THRESHOLD if n == 5 else n // 2 + 1
    if not 1 <= threshold <= n:
        raise ValueError(f"vote threshold must be in [1, {n}], got {threshold}")
    counts = np.zeros(first.dims, dtype=np.int32)
    for m in masks:
        counts += m.data
    return LabelMask(data=(counts >= threshold).astype(np.uint8), spacing=first.spacing)

"""Connected-component analysis of binary lesion masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Connectivity, DEFAULT_CONNECTIVITY, LabelMask, VoxelSpacing

_STRUCT_RANK = {
    Connectivity.FACE6: 1,
    Connectivity.EDGE18: 2,
    Connectivity.CORNER26: 3,
}


@dataclass(frozen=True)
class Lesion:
    """One connected component of a lesion mask.

    ``voxels`` is an (n, 3) integer array of (i, j, k) coordinates in
    x-fastest scan order; ``spacing`` carries the grid's physical scale.
    """

    voxels: np.ndarray
    spacing: VoxelSpacing

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.intp)
        if vox.ndim != 2 or vox.shape[1] != 3 or vox.shape[0] == 0:
            raise ValueError(f"lesion voxels must be a nonempty (n, 3) array, got {vox.shape}")
        if vox.min() < 0:
            raise ValueError("lesion voxel coordinates must be nonnegative")
        if len(np.unique(vox, axis=0)) != len(vox):
            raise ValueError("lesion voxel list contains duplicates")
        vox = vox.copy()
        vox.setflags(write=False)
        object.__setattr__(self, "voxels", vox)

    @property
    def voxel_count(self) -> int:
        return int(self.voxels.shape[0])

    def volume_cc(self) -> float:
        """Component volume in cm^3 (voxel volume in mm^3 / 1000 * count)."""
        return self.spacing.voxel_volume_mm3() / 1000.0 * self.voxel_count

    def centers_mm(self) -> np.ndarray:
        """Physical voxel-center coordinates, (n, 3) in millimeters."""
        return (self.voxels.astype(np.float64) + 0.5) * self.spacing.as_array()


def connected_components(mask: LabelMask,
                         connectivity: Connectivity = DEFAULT_CONNECTIVITY) -> list[Lesion]:
    """Split a mask into maximal connected components under the given neighborhood.

    Components are returned ordered by the scan-order index of their first
    voxel, and each component's voxel list is itself in scan order, so the
    output is fully deterministic. An empty mask yields an empty list.
    """
    structure = ndimage.generate_binary_structure(3, _STRUCT_RANK[connectivity])
    labels, n_labels = ndimage.label(mask.data, structure=structure)
    if n_labels == 0:
        return []

    flat = labels.ravel(order="F")
    fg = np.flatnonzero(flat)
    fg_labels = flat[fg]
    # stable sort keeps scan order within each label group
    order = np.argsort(fg_labels, kind="stable")
    sorted_idx = fg[order]
    sorted_labels = fg_labels[order]
    # group boundaries, one group per label
    boundaries = np.flatnonzero(np.diff(sorted_labels)) + 1
    groups = np.split(sorted_idx, boundaries)

    lesions = []
    for group in groups:
        coords = np.stack(np.unravel_index(group, mask.dims, order="F"), axis=1)
        lesions.append(Lesion(voxels=coords, spacing=mask.spacing))
    # order components by first-voxel scan index
    lesions.sort(key=lambda les: _scan_index(les.voxels[0], mask.dims))
    return lesions


def _scan_index(voxel: np.ndarray, dims: tuple[int, int, int]) -> int:
    i, j, k = (int(v) for v in voxel)
    return i + dims[0] * (j + dims[1] * k)


def lesions_to_mask(lesions: list[Lesion], dims: tuple[int, int, int],
                    spacing: VoxelSpacing) -> LabelMask:
    """Rasterize lesions back onto a grid (inverse of connected_components)."""
    data = np.zeros(dims, dtype=np.uint8)
    for les in lesions:
        data[les.voxels[:, 0], les.voxels[:, 1], les.voxels[:, 2]] = 1
    return LabelMask(data=data, spacing=spacing)

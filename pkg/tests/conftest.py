"""Shared fixtures and independent oracle implementations.

The oracles here deliberately use a different computation style from the
package code (plain Python loops, sets, breadth-first search) so agreement
between the two is meaningful.
"""

from collections import deque

import numpy as np
import pytest

from petquant.volume import LabelMask, ScalarVolume, VolumeKind, VoxelSpacing

SPACING_2MM = VoxelSpacing(2.0, 2.0, 2.0)


def _neighbor_offsets(connectivity: int):
    offsets = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if (di, dj, dk) == (0, 0, 0):
                    continue
                manhattan = abs(di) + abs(dj) + abs(dk)
                if connectivity == 6 and manhattan > 1:
                    continue
                if connectivity == 18 and manhattan > 2:
                    continue
                offsets.append((di, dj, dk))
    return offsets


def flood_fill_components(mask: np.ndarray, connectivity: int) -> list[list[tuple[int, int, int]]]:
    """Brute-force BFS labeling; components and voxels in x-fastest scan order."""
    nx, ny, nz = mask.shape
    offsets = _neighbor_offsets(connectivity)
    seen = set()
    components = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if mask[i, j, k] == 0 or (i, j, k) in seen:
                    continue
                comp = []
                queue = deque([(i, j, k)])
                seen.add((i, j, k))
                while queue:
                    ci, cj, ck = queue.popleft()
                    comp.append((ci, cj, ck))
                    for di, dj, dk in offsets:
                        n = (ci + di, cj + dj, ck + dk)
                        if (
                            0 <= n[0] < nx and 0 <= n[1] < ny and 0 <= n[2] < nz
                            and mask[n] != 0 and n not in seen
                        ):
                            seen.add(n)
                            queue.append(n)
                comp.sort(key=lambda v: v[0] + nx * (v[1] + ny * v[2]))
                components.append(comp)
    return components


def brute_force_dmax_cm(mask: np.ndarray, spacing: VoxelSpacing) -> float:
    """All-pairs maximum distance over foreground voxels, in cm."""
    coords = np.argwhere(mask != 0).astype(np.float64)
    if coords.shape[0] < 2:
        return 0.0
    pts = coords * np.array([spacing.sx, spacing.sy, spacing.sz])
    best = 0.0
    for a in range(pts.shape[0]):
        d2 = ((pts[a + 1 :] - pts[a]) ** 2).sum(axis=1)
        if d2.size:
            best = max(best, float(d2.max()))
    return float(np.sqrt(best)) / 10.0


def mask_from_voxels(voxels, dims, spacing=SPACING_2MM) -> LabelMask:
    data = np.zeros(dims, dtype=np.uint8)
    for i, j, k in voxels:
        data[i, j, k] = 1
    return LabelMask(data=data, spacing=spacing)


def suv_volume(data, spacing=SPACING_2MM) -> ScalarVolume:
    return ScalarVolume(data=np.asarray(data, dtype=np.float64),
                        spacing=spacing, kind=VolumeKind.SUV)


def random_mask(rng: np.random.Generator, dims, fill=0.2, spacing=SPACING_2MM) -> LabelMask:
    data = (rng.random(dims) < fill).astype(np.uint8)
    return LabelMask(data=data, spacing=spacing)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

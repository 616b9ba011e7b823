"""Core grid types: scalar volumes, binary label masks, spacing, connectivity.

Conventions used throughout the package:

- Arrays have shape (nx, ny, nz) and voxel (i, j, k) indexes axis (x, y, z).
- "Scan order" means x-fastest linear order, i.e. Fortran-order raveling of
  the (nx, ny, nz) array. All deterministic tie-breaks use this order.
- The physical center of voxel (i, j, k) is ((i + 0.5) * sx, (j + 0.5) * sy,
  (k + 0.5) * sz) in millimeters, with the grid origin at the corner of
  voxel (0, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class VolumeKind(Enum):
    SUV = "SUV"
    HU = "HU"
    NORMALIZED = "NORMALIZED"


class Connectivity(Enum):
    """Neighborhood used for 3D connected-component analysis.

    FACE6 links voxels sharing a face, EDGE18 adds shared edges and
    CORNER26 adds shared corners. CORNER26 is the package default so that
    diagonally touching lesion voxels are not split into separate lesions.
    """

    FACE6 = 6
    EDGE18 = 18
    CORNER26 = 26

    @classmethod
    def from_int(cls, n: int) -> "Connectivity":
        for member in cls:
            if member.value == n:
                return member
        raise ValueError(f"connectivity must be one of 6, 18, 26; got {n}")


DEFAULT_CONNECTIVITY = Connectivity.CORNER26


@dataclass(frozen=True)
class VoxelSpacing:
    """Physical voxel edge lengths in millimeters along x, y, z."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        for name, v in (("sx", self.sx), ("sy", self.sy), ("sz", self.sz)):
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"spacing {name} must be finite and > 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz], dtype=np.float64)

    def voxel_volume_mm3(self) -> float:
        return float(self.sx) * float(self.sy) * float(self.sz)


def _freeze(arr: np.ndarray) -> np.ndarray:
    """Return a read-only array, copying so the caller's buffer stays writable."""
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarVolume:
    """3D grid of physical scalar values (SUV, HU, or normalized units).

    Immutable after construction; the data buffer is made read-only so
    instances are safe to share across threads.
    """

    data: np.ndarray
    spacing: VoxelSpacing
    kind: VolumeKind

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if data.size == 0:
            raise ValueError("volume data must be non-empty")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data must be finite")
        if self.kind is VolumeKind.SUV and data.min() < 0:
            raise ValueError("SUV volumes must be nonnegative")
        if self.kind is VolumeKind.NORMALIZED and (data.min() < 0 or data.max() > 1):
            raise ValueError("normalized volumes must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def scan_values(self) -> np.ndarray:
        """Values in x-fastest scan order."""
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class LabelMask:
    """3D binary mask on the same grid layout as :class:`ScalarVolume`."""

    data: np.ndarray
    spacing: VoxelSpacing

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"mask data must be 3D, got shape {data.shape}")
        if data.size == 0:
            raise ValueError("mask data must be non-empty")
        if data.dtype != np.uint8:
            as_u8 = data.astype(np.uint8)
            if not np.array_equal(as_u8, data):
                raise ValueError("mask values must be exactly 0 or 1")
            data = as_u8
        if data.max(initial=0) > 1:
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def foreground_count(self) -> int:
        return int(self.data.sum(dtype=np.int64))

    def foreground_voxels(self) -> np.ndarray:
        """(n, 3) integer voxel coordinates of foreground, in scan order."""
        flat = np.flatnonzero(self.data.ravel(order="F"))
        return np.stack(np.unravel_index(flat, self.dims, order="F"), axis=1)


def check_same_grid(a: ScalarVolume | LabelMask, b: ScalarVolume | LabelMask) -> None:
    """Raise unless the two grids share dims and spacing exactly."""
    if a.dims != b.dims:
        raise ValueError(f"grid mismatch: dims {a.dims} vs {b.dims}")
    if a.spacing != b.spacing:
        raise ValueError(f"grid mismatch: spacing {a.spacing} vs {b.spacing}")


def body_weight_suv(concentration_bq_ml: np.ndarray | float,
                    weight_kg: float,
                    injected_dose_bq: float) -> np.ndarray | float:
    """Body-weight SUV from activity concentration in Bq/ml.

    SUV = concentration * weight_kg * 1000 / injected_dose_Bq. This follows
    the common body-weight convention (1 kg ~ 1000 ml of tissue); inputs in
    other conventions should be converted before calling.
    """
    if weight_kg <= 0:
        raise ValueError("weight_kg must be positive")
    if injected_dose_bq <= 0:
        raise ValueError("injected_dose_bq must be positive")
    return concentration_bq_ml * weight_kg * 1000.0 / injected_dose_bq

"""Deterministic synthetic phantoms with metrics known by construction.

A phantom is a set of constant-uptake spherical lesions on a quiet
background. Because every lesion's voxel set, peak value and volume are
known at generation time, the six patient-level metrics can be computed
directly from the construction bookkeeping, independently of the analysis
modules. That makes phantoms the oracle substrate for the test suite.

Lesions must be separated by at least one background voxel in Chebyshev
distance so the constructed lesion count survives corner-connected
component analysis unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .components import connected_components, lesions_to_mask
from .metrics import PatientMetrics
from .volume import Connectivity, LabelMask, ScalarVolume, VolumeKind, VoxelSpacing


@dataclass(frozen=True)
class SphereSpec:
    """One lesion: center in physical millimeters, radius, constant SUV."""

    center_mm: tuple[float, float, float]
    radius_mm: float
    suv_peak: float


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    dims: tuple[int, int, int]
    spacing: VoxelSpacing
    lesions: tuple[SphereSpec, ...] = ()
    background_suv: float = 0.1
    noise_sd: float = 0.0

    def __post_init__(self):
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if self.background_suv < 0:
            raise ValueError("background_suv must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        for les in self.lesions:
            if les.radius_mm < min(self.spacing.as_array()):
                raise ValueError(
                    f"lesion radius {les.radius_mm} mm is below one voxel "
                    f"({min(self.spacing.as_array())} mm)"
                )
            if les.suv_peak <= self.background_suv:
                raise ValueError("suv_peak must exceed background_suv")
        object.__setattr__(self, "lesions", tuple(self.lesions))


@dataclass(frozen=True)
class PerturbationSpec:
    """Seeded corruption of a ground-truth mask into a plausible prediction.

    drop_lesion_prob removes whole components; add_false_prob injects up to
    add_false_count single-voxel blobs well clear of existing foreground;
    dilate_erode_voxels applies that many binary dilation (positive) or
    erosion (negative) steps; shift_voxels translates the mask along every
    axis, discarding voxels pushed off the grid.
    """

    seed: int
    drop_lesion_prob: float = 0.0
    add_false_prob: float = 0.0
    dilate_erode_voxels: int = 0
    shift_voxels: int = 0
    add_false_count: int = 1

    def __post_init__(self):
        if not 0.0 <= self.drop_lesion_prob <= 1.0:
            raise ValueError("drop_lesion_prob must be in [0, 1]")
        if not 0.0 <= self.add_false_prob <= 1.0:
            raise ValueError("add_false_prob must be in [0, 1]")
        if self.add_false_count < 0:
            raise ValueError("add_false_count must be >= 0")


def _f32(x: float) -> float:
    """Quantize through float32 so on-disk round trips are lossless."""
    return float(np.float32(x))


def _rasterize_sphere(spec: SphereSpec, dims, spacing: VoxelSpacing) -> np.ndarray:
    """(n, 3) voxel coordinates whose physical centers lie within the sphere."""
    s = spacing.as_array()
    center = np.asarray(spec.center_mm, dtype=np.float64)
    extent = np.asarray(dims) * s
    if np.any(center - spec.radius_mm < 0) or np.any(center + spec.radius_mm > extent):
        raise ValueError(
            f"lesion at {spec.center_mm} mm radius {spec.radius_mm} mm exceeds "
            f"the grid extent {tuple(extent)} mm"
        )
    lo = np.maximum(np.floor((center - spec.radius_mm) / s - 0.5), 0).astype(int)
    hi = np.minimum(np.ceil((center + spec.radius_mm) / s - 0.5), np.asarray(dims) - 1).astype(int)
    ii, jj, kk = np.meshgrid(
        np.arange(lo[0], hi[0] + 1),
        np.arange(lo[1], hi[1] + 1),
        np.arange(lo[2], hi[2] + 1),
        indexing="ij",
    )
    coords = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    centers = (coords + 0.5) * s
    inside = ((centers - center) ** 2).sum(axis=1) <= spec.radius_mm**2
    vox = coords[inside]
    if vox.shape[0] == 0:
        raise ValueError(f"lesion at {spec.center_mm} mm rasterizes to no voxels")
    return vox


def _check_separation(voxel_sets: list[np.ndarray]) -> None:
    """Require pairwise Chebyshev gap >= 2 voxels (no overlap, no touching)."""
    for a in range(len(voxel_sets)):
        for b in range(a + 1, len(voxel_sets)):
            va, vb = voxel_sets[a], voxel_sets[b]
            gap = None
            for start in range(0, va.shape[0], 2048):
                block = va[start : start + 2048]
                g = np.abs(block[:, None, :] - vb[None, :, :]).max(axis=2).min()
                gap = g if gap is None else min(gap, g)
            if gap < 2:
                raise ValueError(
                    f"lesions {a} and {b} overlap or touch (Chebyshev gap {gap})"
                )


def _brute_force_dmax_cm(voxels: np.ndarray, spacing: VoxelSpacing) -> float:
    """All-pairs dissemination, chunked to bound memory."""
    if voxels.shape[0] < 2:
        return 0.0
    pts = voxels.astype(np.float64) * spacing.as_array()
    best = 0.0
    chunk = 2048
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best) / 10.0


def generate_phantom(spec: PhantomSpec) -> tuple[ScalarVolume, LabelMask, PatientMetrics]:
    """Rasterize the phantom and return it with its constructed metrics.

    The same seed always yields bit-identical volumes, masks and expected
    values. Noise (if any) is confined to background voxels, so lesion SUV
    statistics remain exact.
    """
    rng = np.random.default_rng(spec.seed)
    voxel_sets = [_rasterize_sphere(les, spec.dims, spec.spacing) for les in spec.lesions]
    _check_separation(voxel_sets)

    background = _f32(spec.background_suv)
    data = np.full(spec.dims, background, dtype=np.float64)
    if spec.noise_sd > 0:
        noisy = spec.background_suv + rng.normal(0.0, spec.noise_sd, size=spec.dims)
        data = np.maximum(noisy, 0.0).astype(np.float32).astype(np.float64)

    mask = np.zeros(spec.dims, dtype=np.uint8)
    peaks = []
    for les, vox in zip(spec.lesions, voxel_sets):
        peak = _f32(les.suv_peak)
        peaks.append(peak)
        data[vox[:, 0], vox[:, 1], vox[:, 2]] = peak
        mask[vox[:, 0], vox[:, 1], vox[:, 2]] = 1

    volume = ScalarVolume(data=data, spacing=spec.spacing, kind=VolumeKind.SUV)
    label_mask = LabelMask(data=mask, spacing=spec.spacing)

    if not spec.lesions:
        return volume, label_mask, PatientMetrics.zero()

    counts = np.array([v.shape[0] for v in voxel_sets], dtype=np.float64)
    total = counts.sum()
    vox_vol_cc = (spec.spacing.sx * spec.spacing.sy * spec.spacing.sz) / 1000.0
    union = np.concatenate(voxel_sets, axis=0)
    expected = PatientMetrics(
        suv_mean=float(np.dot(counts, peaks) / total),
        suv_max=float(max(peaks)),
        tmtv=float(total * vox_vol_cc),
        tla=float(sum(p * c * vox_vol_cc for p, c in zip(peaks, counts))),
        dmax=_brute_force_dmax_cm(union, spec.spacing),
        lesion_count=len(spec.lesions),
    )
    return volume, label_mask, expected


def perturb_mask(mask: LabelMask, pspec: PerturbationSpec,
                 connectivity: Connectivity = Connectivity.CORNER26) -> LabelMask:
    """Deterministically corrupt a mask per the perturbation spec.

    Operations apply in order: lesion drops, morphology, shift, then false
    blob injection (so injected blobs are guaranteed separate components of
    the final mask).
    """
    rng = np.random.default_rng(pspec.seed)
    dims = mask.dims

    lesions = connected_components(mask, connectivity)
    kept = [les for les in lesions if rng.random() >= pspec.drop_lesion_prob]
    data = lesions_to_mask(kept, dims, mask.spacing).data.copy()

    if pspec.dilate_erode_voxels > 0:
        data = ndimage.binary_dilation(data, iterations=pspec.dilate_erode_voxels)
        data = data.astype(np.uint8)
    elif pspec.dilate_erode_voxels < 0:
        data = ndimage.binary_erosion(data, iterations=-pspec.dilate_erode_voxels)
        data = data.astype(np.uint8)

    if pspec.shift_voxels != 0:
        shifted = np.zeros_like(data)
        s = pspec.shift_voxels
        src = tuple(slice(max(0, -s), min(n, n - s)) for n in dims)
        dst = tuple(slice(max(0, s), min(n, n + s)) for n in dims)
        shifted[dst] = data[src]
        data = shifted

    for _ in range(pspec.add_false_count):
        if rng.random() < pspec.add_false_prob:
            spot = _place_false_voxel(data, rng)
            if spot is not None:
                data[spot] = 1

    return LabelMask(data=data, spacing=mask.spacing)


def _place_false_voxel(data: np.ndarray, rng: np.random.Generator,
                       attempts: int = 2000) -> tuple[int, int, int] | None:
    """Pick a voxel with an empty 3x3x3 neighborhood, so adding it creates
    a new component under any connectivity. None if the grid is too full."""
    dims = data.shape
    for _ in range(attempts):
        spot = tuple(int(rng.integers(1, n - 1)) for n in dims)
        nb = data[spot[0] - 1 : spot[0] + 2, spot[1] - 1 : spot[1] + 2, spot[2] - 1 : spot[2] + 2]
        if nb.sum() == 0:
            return spot
    return None


def random_phantom_spec(seed: int,
                        dims: tuple[int, int, int] = (24, 24, 24),
                        spacing: VoxelSpacing = VoxelSpacing(2.0, 2.0, 2.0),
                        max_lesions: int = 3,
                        background_suv: float = 0.1,
                        noise_sd: float = 0.0) -> PhantomSpec:
    """Draw a valid random phantom spec: 0..max_lesions well-separated
    spheres with varied radii and peaks, placement rejection-sampled."""
    rng = np.random.default_rng(seed)
    s = np.array([spacing.sx, spacing.sy, spacing.sz])
    extent = np.asarray(dims) * s
    n_lesions = int(rng.integers(0, max_lesions + 1))
    min_gap = 3.0 * float(s.max())

    placed: list[SphereSpec] = []
    guard = 0
    while len(placed) < n_lesions and guard < 500:
        guard += 1
        radius = float(rng.uniform(1.0, 2.6)) * float(s.max())
        margin = radius + float(s.max())
        if np.any(extent <= 2 * margin):
            continue
        center = np.array([rng.uniform(margin, e - margin) for e in extent])
        ok = all(
            np.linalg.norm(center - np.asarray(p.center_mm)) > radius + p.radius_mm + min_gap
            for p in placed
        )
        if ok:
            peak = float(rng.uniform(2.0, 12.0))
            placed.append(SphereSpec(center_mm=tuple(center), radius_mm=radius, suv_peak=peak))

    return PhantomSpec(
        seed=seed,
        dims=dims,
        spacing=spacing,
        lesions=tuple(placed),
        background_suv=background_suv,
        noise_sd=noise_sd,
    )

"""Volume and mask file I/O: NIfTI-1 (.nii / .nii.gz) and RAWJSON.

The NIfTI-1 codec is intentionally minimal: it reads dims, pixdim,
datatype (uint8 / int16 / float32 / float64) and scl_slope / scl_inter,
and writes single-file .nii with masks as uint8 and volumes as float32.
On-disk voxel order is x-fastest, matching the package scan-order
convention, so arrays are reshaped with Fortran order.

RAWJSON is a test-friendly fixture format: a little-endian float32 raw
file next to a JSON sidecar
``{"dims": [nx, ny, nz], "spacing": [sx, sy, sz], "kind": "SUV|HU|NORMALIZED|MASK"}``.
The sidecar path is passed to the loaders; the raw payload lives at the
same path with a ``.raw`` suffix (or at an explicit ``"raw"`` key).
"""

from __future__ import annotations

import gzip
import json
import struct
from enum import Enum
from pathlib import Path

import numpy as np

from .volume import LabelMask, ScalarVolume, VolumeKind, VoxelSpacing


class FileFormat(Enum):
    NIFTI1 = "NIFTI1"
    RAWJSON = "RAWJSON"


class VolumeIOError(Exception):
    """Unreadable file, malformed header, or header/data mismatch."""


# NIfTI-1 datatype codes we support.
_NIFTI_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}

_HDR_SIZE = 348
_VOX_OFFSET = 352


def _open_maybe_gzip(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _read_nifti(path: Path) -> tuple[np.ndarray, VoxelSpacing]:
    try:
        blob = _open_maybe_gzip(path)
    except OSError as exc:
        raise VolumeIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HDR_SIZE:
        raise VolumeIOError(f"{path}: truncated NIfTI header ({len(blob)} bytes)")

    endian = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != _HDR_SIZE:
        endian = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != _HDR_SIZE:
            raise VolumeIOError(f"{path}: not a NIfTI-1 file (sizeof_hdr={sizeof_hdr})")

    dim = struct.unpack_from(endian + "8h", blob, 40)
    (datatype,) = struct.unpack_from(endian + "h", blob, 70)
    pixdim = struct.unpack_from(endian + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", blob, 112)
    magic = struct.unpack_from("4s", blob, 344)[0]

    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeIOError(f"{path}: bad NIfTI magic {magic!r}")
    if magic == b"ni1\x00":
        raise VolumeIOError(f"{path}: two-file NIfTI (.hdr/.img) is not supported")

    ndim = dim[0]
    if ndim < 3 or any(d < 1 for d in dim[1 : ndim + 1]):
        raise VolumeIOError(f"{path}: unsupported dim field {dim}")
    if ndim > 3 and any(d != 1 for d in dim[4 : ndim + 1]):
        raise VolumeIOError(f"{path}: only 3D images are supported, dim={dim}")
    nx, ny, nz = (int(d) for d in dim[1:4])

    if datatype not in _NIFTI_DTYPES:
        raise VolumeIOError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = _NIFTI_DTYPES[datatype].newbyteorder(endian)

    sx, sy, sz = (float(p) for p in pixdim[1:4])
    if min(sx, sy, sz) <= 0 or not all(np.isfinite([sx, sy, sz])):
        raise VolumeIOError(f"{path}: non-positive pixdim {(sx, sy, sz)}")

    offset = int(vox_offset) if vox_offset >= _HDR_SIZE else _VOX_OFFSET
    count = nx * ny * nz
    payload = blob[offset : offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise VolumeIOError(
            f"{path}: data size mismatch, expected {count} voxels of {dtype}"
        )
    flat = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if scl_slope not in (0.0, 1.0) and np.isfinite(scl_slope):
        flat = flat * scl_slope + scl_inter
    elif scl_slope == 1.0 and scl_inter != 0.0 and np.isfinite(scl_inter):
        flat = flat + scl_inter
    data = flat.reshape((nx, ny, nz), order="F")
    return data, VoxelSpacing(sx, sy, sz)


def _write_nifti(path: Path, data: np.ndarray, spacing: VoxelSpacing, dtype: np.dtype) -> None:
    nx, ny, nz = data.shape
    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    datatype = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4,
                np.dtype(np.float32): 16, np.dtype(np.float64): 64}[np.dtype(dtype)]
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing.sx, spacing.sy, spacing.sz, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(_VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: millimeters
    struct.pack_into("<h", hdr, 254, 1)  # sform_code
    struct.pack_into("<4f", hdr, 280, spacing.sx, 0, 0, 0)
    struct.pack_into("<4f", hdr, 296, 0, spacing.sy, 0, 0)
    struct.pack_into("<4f", hdr, 312, 0, 0, spacing.sz, 0)
    struct.pack_into("4s", hdr, 344, b"n+1\x00")

    body = bytes(hdr) + b"\x00\x00\x00\x00"  # no header extensions
    body += np.asarray(data, dtype=dtype).tobytes(order="F")
    if path.suffix == ".gz":
        # mtime pinned so identical inputs give byte-identical files
        path.write_bytes(gzip.compress(body, mtime=0))
    else:
        path.write_bytes(body)


def _rawjson_paths(path: Path) -> tuple[Path, dict]:
    try:
        sidecar = json.loads(path.read_text())
    except OSError as exc:
        raise VolumeIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise VolumeIOError(f"{path}: invalid JSON sidecar: {exc}") from exc
    raw_name = sidecar.get("raw", path.with_suffix(".raw").name)
    return path.parent / raw_name, sidecar


def _read_rawjson(path: Path) -> tuple[np.ndarray, VoxelSpacing, str]:
    raw_path, sidecar = _rawjson_paths(path)
    for key in ("dims", "spacing", "kind"):
        if key not in sidecar:
            raise VolumeIOError(f"{path}: sidecar missing '{key}'")
    dims = sidecar["dims"]
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise VolumeIOError(f"{path}: bad dims {dims}")
    nx, ny, nz = (int(d) for d in dims)
    spacing_vals = [float(s) for s in sidecar["spacing"]]
    if len(spacing_vals) != 3 or min(spacing_vals) <= 0:
        raise VolumeIOError(f"{path}: non-positive spacing {sidecar['spacing']}")
    try:
        payload = raw_path.read_bytes()
    except OSError as exc:
        raise VolumeIOError(f"cannot read {raw_path}: {exc}") from exc
    flat = np.frombuffer(payload, dtype="<f4")
    if flat.size != nx * ny * nz:
        raise VolumeIOError(
            f"{path}: data length {flat.size} does not match dims {nx}x{ny}x{nz}"
        )
    data = flat.astype(np.float64).reshape((nx, ny, nz), order="F")
    return data, VoxelSpacing(*spacing_vals), str(sidecar["kind"])


def _write_rawjson(path: Path, data: np.ndarray, spacing: VoxelSpacing, kind: str) -> None:
    raw_path = path.with_suffix(".raw")
    sidecar = {
        "dims": list(data.shape),
        "spacing": [spacing.sx, spacing.sy, spacing.sz],
        "kind": kind,
        "raw": raw_path.name,
    }
    path.write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    raw_path.write_bytes(np.asarray(data, dtype="<f4").tobytes(order="F"))


def detect_format(path: str | Path) -> FileFormat:
    name = str(path)
    if name.endswith(".json"):
        return FileFormat.RAWJSON
    return FileFormat.NIFTI1


def load_volume(path: str | Path, fmt: FileFormat | None = None) -> ScalarVolume:
    """Load a scalar volume; spacing and kind come from the file header."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt is FileFormat.RAWJSON:
        data, spacing, kind_name = _read_rawjson(path)
        try:
            kind = VolumeKind(kind_name)
        except ValueError as exc:
            raise VolumeIOError(f"{path}: sidecar kind {kind_name!r} is not a volume kind") from exc
    else:
        data, spacing = _read_nifti(path)
        kind = VolumeKind.SUV if data.min() >= 0 else VolumeKind.HU
    try:
        return ScalarVolume(data=data, spacing=spacing, kind=kind)
    except ValueError as exc:
        raise VolumeIOError(f"{path}: {exc}") from exc


def load_mask(path: str | Path, fmt: FileFormat | None = None) -> LabelMask:
    """Load a binary mask; values must be exactly 0 or 1."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt is FileFormat.RAWJSON:
        data, spacing, _ = _read_rawjson(path)
    else:
        data, spacing = _read_nifti(path)
    try:
        return LabelMask(data=data, spacing=spacing)
    except ValueError as exc:
        raise VolumeIOError(f"{path}: {exc}") from exc


def save_volume(volume: ScalarVolume, path: str | Path, fmt: FileFormat | None = None) -> None:
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt is FileFormat.RAWJSON:
        _write_rawjson(path, volume.data, volume.spacing, volume.kind.value)
    else:
        _write_nifti(path, volume.data, volume.spacing, np.dtype(np.float32))


def save_mask(mask: LabelMask, path: str | Path, fmt: FileFormat | None = None) -> None:
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt is FileFormat.RAWJSON:
        _write_rawjson(path, mask.data, mask.spacing, "MASK")
    else:
        _write_nifti(path, mask.data, mask.spacing, np.dtype(np.uint8))

"""Minimal NIfTI-1 reader/writer for the subset this pipeline needs.

Supported: single-file ``.nii`` (magic ``n+1\\0``), optionally gzipped
(detected by magic bytes, not extension), datatypes uint8 / int16 /
float32, strictly 3D grids (``dim[0] == 3``). Grids are treated as
axis-aligned: spacing comes from ``pixdim[1..3]`` and the origin from
``qoffset_{x,y,z}``; qform/sform rotations are not interpreted.

On-disk voxel order is x-fastest, matching the in-memory ``[x, y, z]``
indexing of :class:`~aneuseg.volume.Volume3`.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import NiftiError, VolumeError
from .volume import LabelMask, Volume3

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

# NIfTI-1 datatype codes for the supported subset.
DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {
    DT_UINT8: np.dtype(np.uint8),
    DT_INT16: np.dtype(np.int16),
    DT_FLOAT32: np.dtype(np.float32),
}


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path, as_label: bool = False) -> Volume3 | LabelMask:
    """Read a NIfTI-1 file into a :class:`Volume3` (or :class:`LabelMask`).

    With ``as_label=True`` the payload must contain only 0/1 values.
    Both byte orders are accepted on read.
    """
    path = Path(path)
    if not path.is_file():
        raise NiftiError(f"no such file: {path}")
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise NiftiError(f"file shorter than the {HEADER_SIZE}-byte NIfTI-1 header: {path}")

    sizeof_hdr_le = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr_le == HEADER_SIZE:
        bo = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
        bo = ">"
    else:
        raise NiftiError(f"bad sizeof_hdr (expected {HEADER_SIZE}): {path}")

    magic = raw[344:348]
    if magic != MAGIC_SINGLE:
        raise NiftiError(f"bad magic {magic!r} (only single-file 'n+1' NIfTI-1 is supported): {path}")

    dim = struct.unpack_from(f"{bo}8h", raw, 40)
    if dim[0] != 3:
        raise NiftiError(f"only 3D volumes are supported, got dim[0]={dim[0]}: {path}")
    nx, ny, nz = (int(d) for d in dim[1:4])
    if min(nx, ny, nz) < 1:
        raise NiftiError(f"non-positive grid dims {(nx, ny, nz)}: {path}")

    datatype = struct.unpack_from(f"{bo}h", raw, 70)[0]
    if datatype not in _DTYPES:
        raise NiftiError(f"unsupported datatype code {datatype} (supported: 2, 4, 16): {path}")
    dtype = _DTYPES[datatype].newbyteorder(bo)

    pixdim = struct.unpack_from(f"{bo}8f", raw, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not (np.isfinite(s) and s > 0) for s in spacing):
        raise NiftiError(f"non-positive pixdim {spacing}: {path}")

    vox_offset = int(round(struct.unpack_from(f"{bo}f", raw, 108)[0]))
    if vox_offset < HEADER_SIZE:
        raise NiftiError(f"vox_offset {vox_offset} points inside the header: {path}")
    origin = tuple(float(v) for v in struct.unpack_from(f"{bo}3f", raw, 268))

    count = nx * ny * nz
    nbytes = count * dtype.itemsize
    payload = raw[vox_offset:vox_offset + nbytes]
    if len(payload) < nbytes:
        raise NiftiError(f"truncated voxel payload ({len(payload)} of {nbytes} bytes): {path}")
    flat = np.frombuffer(payload, dtype=dtype, count=count)
    voxels = flat.reshape((nx, ny, nz), order="F")

    if as_label:
        if not np.isin(voxels, (0, 1)).all():
            raise NiftiError(f"label file contains values outside {{0, 1}}: {path}")
        return LabelMask(voxels.astype(np.uint8), spacing, origin)

    voxels = voxels.astype(np.float32)
    if not np.all(np.isfinite(voxels)):
        raise NiftiError(f"non-finite voxel values in {path}")
    return Volume3(voxels, spacing, origin)


def _datatype_for(vol: Volume3 | LabelMask, datatype: int | None) -> int:
    if datatype is not None:
        if datatype not in _DTYPES:
            raise NiftiError(f"unsupported datatype code {datatype} (supported: 2, 4, 16)")
        return datatype
    return DT_UINT8 if isinstance(vol, LabelMask) else DT_FLOAT32


def write_nifti(vol: Volume3 | LabelMask, path, datatype: int | None = None) -> None:
    """Write a volume or mask as a little-endian NIfTI-1 file.

    ``datatype`` defaults to float32 for volumes and uint8 for masks.
    A ``.gz`` suffix on ``path`` selects gzip compression. float32
    payloads round-trip bit-exactly through :func:`read_nifti`.
    """
    path = Path(path)
    code = _datatype_for(vol, datatype)
    dtype = _DTYPES[code]

    data = vol.voxels
    if isinstance(vol, LabelMask):
        if code == DT_UINT8 and data.max(initial=0) > 1:
            raise VolumeError("label values must be exactly 0 or 1")
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        if data.min() < info.min or data.max() > info.max:
            raise NiftiError(
                f"voxel values out of range for datatype {code} "
                f"([{info.min}, {info.max}])"
            )
        cast = np.rint(data).astype(dtype) if np.issubdtype(data.dtype, np.floating) else data.astype(dtype)
    else:
        cast = data.astype(dtype)

    nx, ny, nz = vol.dims
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, dtype.itemsize * 8)  # bitpix
    sx, sy, sz = vol.spacing
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<3f", hdr, 268, *vol.origin)  # qoffset_{x,y,z}
    hdr[344:348] = MAGIC_SINGLE

    payload = np.asfortranarray(cast).tobytes(order="F")
    blob = bytes(hdr) + b"\x00\x00\x00\x00" + payload

    try:
        if path.suffix == ".gz":
            # mtime pinned so identical volumes produce identical files
            with gzip.GzipFile(path, "wb", mtime=0) as fh:
                fh.write(blob)
        else:
            path.write_bytes(blob)
    except OSError as exc:
        raise NiftiError(f"cannot write {path}: {exc}") from exc

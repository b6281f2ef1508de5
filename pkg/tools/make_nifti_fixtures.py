#!/usr/bin/env python3
"""Generate the NIfTI-1 fixture files under tests/data.

This is a self-contained reference writer used only to produce test
fixtures. It deliberately shares no code with the package's NIfTI module:
the header is assembled field by field from the NIfTI-1 standard layout
(offset, struct format, value), so the fixtures exercise the package
reader against an independent implementation of the format.

Usage: python3 tools/make_nifti_fixtures.py [output_dir]
(default output_dir: tests/data next to this repo's tests)
"""

from __future__ import annotations

import gzip
import struct
import sys
from pathlib import Path

# (name, byte offset, struct format) for every field we populate,
# straight from the NIfTI-1 header table.
_FIELDS = {
    "sizeof_hdr": (0, "i"),
    "dim_info": (39, "B"),
    "dim": (40, "8h"),
    "datatype": (70, "h"),
    "bitpix": (72, "h"),
    "pixdim": (76, "8f"),
    "vox_offset": (108, "f"),
    "scl_slope": (112, "f"),
    "scl_inter": (116, "f"),
    "xyzt_units": (123, "B"),
    "descrip": (148, "80s"),
    "qform_code": (252, "h"),
    "sform_code": (254, "h"),
    "quatern_b": (256, "f"),
    "quatern_c": (260, "f"),
    "quatern_d": (264, "f"),
    "qoffset_x": (268, "f"),
    "qoffset_y": (272, "f"),
    "qoffset_z": (276, "f"),
    "magic": (344, "4s"),
}

_DATATYPES = {
    "uint8": (2, 8, "B"),
    "int16": (4, 16, "h"),
    "float32": (16, 32, "f"),
}


def build_nifti(shape, values, dtype_name, spacing, origin=(0.0, 0.0, 0.0),
                byte_order="<") -> bytes:
    """Assemble a complete single-file NIfTI-1 blob for a 3D grid.

    ``values`` must be a flat sequence in x-fastest order, one scalar per
    voxel.
    """
    nx, ny, nz = shape
    if len(values) != nx * ny * nz:
        raise ValueError("value count does not match the grid")
    code, bits, elem_fmt = _DATATYPES[dtype_name]

    header = bytearray(348)

    def put(name, *vals):
        offset, fmt = _FIELDS[name]
        struct.pack_into(byte_order + fmt, header, offset, *vals)

    put("sizeof_hdr", 348)
    put("dim", 3, nx, ny, nz, 1, 1, 1, 1)
    put("datatype", code)
    put("bitpix", bits)
    put("pixdim", 1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    put("vox_offset", 352.0)
    put("scl_slope", 1.0)
    put("scl_inter", 0.0)
    put("xyzt_units", 2)  # millimetres
    put("descrip", b"reference fixture writer")
    put("qform_code", 1)
    put("qoffset_x", origin[0])
    put("qoffset_y", origin[1])
    put("qoffset_z", origin[2])
    put("magic", b"n+1\x00")

    payload = struct.pack(f"{byte_order}{len(values)}{elem_fmt}", *values)
    return bytes(header) + b"\x00" * 4 + payload


def ramp(n):
    return list(range(n))


def write_fixtures(out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = (3, 4, 5)
    n = 60
    written = []

    def emit(name, blob, gz=False):
        path = out_dir / name
        path.write_bytes(gzip.compress(blob, mtime=0) if gz else blob)
        written.append(path)

    emit("ramp_3x4x5_float32.nii",
         build_nifti(shape, [float(i) for i in ramp(n)], "float32",
                     spacing=(0.5429, 0.6, 0.7), origin=(-1.5, 2.25, 3.0)))
    emit("ramp_3x4x5_float32.nii.gz",
         build_nifti(shape, [float(i) for i in ramp(n)], "float32",
                     spacing=(0.5429, 0.6, 0.7), origin=(-1.5, 2.25, 3.0)),
         gz=True)
    emit("ramp_3x4x5_float32_bigendian.nii",
         build_nifti(shape, [float(i) for i in ramp(n)], "float32",
                     spacing=(1.0, 1.0, 1.0), byte_order=">"))
    emit("ramp_3x4x5_uint8.nii",
         build_nifti(shape, ramp(n), "uint8", spacing=(1.0, 1.0, 1.0)))
    emit("shifted_ramp_3x4x5_int16.nii",
         build_nifti(shape, [i - 30 for i in ramp(n)], "int16",
                     spacing=(0.25, 0.25, 2.0)))
    emit("binary_3x4x5_uint8.nii",
         build_nifti(shape, [i % 2 for i in ramp(n)], "uint8",
                     spacing=(0.5, 0.5, 0.5)))
    return written


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "tests" / "data"
    )
    for path in write_fixtures(target):
        print(path)

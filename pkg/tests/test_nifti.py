"""NIfTI-1 I/O: round-trips, header constants, and reference fixtures."""

import gzip
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from aneuseg.errors import NiftiError
from aneuseg.nifti import (DT_FLOAT32, DT_INT16, DT_UINT8, read_nifti,
                           write_nifti)
from aneuseg.volume import LabelMask, Volume3

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_TOOL = Path(__file__).parent.parent / "tools" / "make_nifti_fixtures.py"


class TestRoundTrip:
    def test_zero_volume_2x2x2(self, tmp_path):
        vol = Volume3(np.zeros((2, 2, 2), dtype=np.float32), (1.0, 1.0, 1.0))
        path = tmp_path / "zero.nii"
        write_nifti(vol, path)
        back = read_nifti(path)
        assert back.dims == vol.dims
        assert back.spacing == vol.spacing
        assert np.array_equal(back.voxels, vol.voxels)

    def test_random_float32_bit_exact(self, tmp_path, rng):
        vol = Volume3(rng.normal(size=(8, 8, 8)).astype(np.float32), (0.7, 0.8, 0.9))
        path = tmp_path / "rand.nii"
        write_nifti(vol, path)
        back = read_nifti(path)
        assert back.voxels.tobytes() == vol.voxels.tobytes()

    def test_spacing_05429_survives(self, tmp_path):
        vol = Volume3(np.zeros((4, 4, 4)), (0.5429, 0.5429, 0.5429))
        path = tmp_path / "sp.nii"
        write_nifti(vol, path)
        back = read_nifti(path)
        for a, b in zip(back.spacing, vol.spacing):
            assert abs(a - b) < 1e-4

    def test_origin_survives(self, tmp_path):
        vol = Volume3(np.zeros((2, 2, 2)), (1, 1, 1), (-3.5, 2.25, 10.0))
        path = tmp_path / "orig.nii"
        write_nifti(vol, path)
        assert read_nifti(path).origin == vol.origin

    def test_gzip_roundtrip(self, tmp_path, rng):
        vol = Volume3(rng.normal(size=(5, 6, 7)).astype(np.float32), (1, 1, 1))
        path = tmp_path / "v.nii.gz"
        write_nifti(vol, path)
        assert path.read_bytes()[:2] == b"\x1f\x8b"
        back = read_nifti(path)
        assert np.array_equal(back.voxels, vol.voxels)

    def test_gzip_detected_by_magic_not_extension(self, tmp_path, rng):
        vol = Volume3(rng.normal(size=(3, 3, 3)).astype(np.float32), (1, 1, 1))
        gz = tmp_path / "v.nii.gz"
        write_nifti(vol, gz)
        renamed = tmp_path / "plain_name.nii"
        renamed.write_bytes(gz.read_bytes())  # gzip bytes under a .nii name
        back = read_nifti(renamed)
        assert np.array_equal(back.voxels, vol.voxels)

    def test_mask_roundtrip_stays_binary(self, tmp_path):
        arr = (np.arange(27).reshape(3, 3, 3) % 2).astype(np.uint8)
        mask = LabelMask(arr, (0.5, 0.5, 0.5))
        path = tmp_path / "m.nii"
        write_nifti(mask, path)
        back = read_nifti(path, as_label=True)
        assert isinstance(back, LabelMask)
        assert np.array_equal(back.voxels, arr)

    def test_int16_roundtrip(self, tmp_path):
        vol = Volume3(np.arange(-6, 6, dtype=np.float32).reshape(3, 2, 2), (1, 1, 1))
        path = tmp_path / "i16.nii"
        write_nifti(vol, path, datatype=DT_INT16)
        assert np.array_equal(read_nifti(path).voxels, vol.voxels)


class TestHeaderFormat:
    def test_header_constants(self, tmp_path):
        vol = Volume3(np.zeros((2, 2, 2)), (1, 1, 1))
        path = tmp_path / "h.nii"
        write_nifti(vol, path)
        raw = path.read_bytes()
        assert struct.unpack_from("<i", raw, 0)[0] == 348
        assert raw[344:348] == b"n+1\x00"

    def test_datatype_codes(self, tmp_path):
        vol = Volume3(np.zeros((2, 2, 2)), (1, 1, 1))
        for code, bits in ((DT_UINT8, 8), (DT_INT16, 16), (DT_FLOAT32, 32)):
            path = tmp_path / f"dt{code}.nii"
            write_nifti(vol, path, datatype=code)
            raw = path.read_bytes()
            assert struct.unpack_from("<h", raw, 70)[0] == code
            assert struct.unpack_from("<h", raw, 72)[0] == bits

    def test_x_fastest_payload_order(self, tmp_path):
        # voxel (x, y, z) lands at payload index x + nx*y + nx*ny*z
        arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4, order="F")
        vol = Volume3(arr, (1, 1, 1))
        path = tmp_path / "order.nii"
        write_nifti(vol, path)
        raw = path.read_bytes()
        vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
        flat = np.frombuffer(raw[vox_offset:], dtype="<f4", count=24)
        assert np.array_equal(flat, np.arange(24, dtype=np.float32))


class TestReadErrors:
    def _write_valid(self, tmp_path) -> Path:
        vol = Volume3(np.zeros((2, 2, 2)), (1, 1, 1))
        path = tmp_path / "ok.nii"
        write_nifti(vol, path)
        return path

    def test_missing_file(self, tmp_path):
        with pytest.raises(NiftiError, match="no such file"):
            read_nifti(tmp_path / "absent.nii")

    def test_bad_sizeof_hdr(self, tmp_path):
        path = self._write_valid(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<i", raw, 0, 999)
        path.write_bytes(bytes(raw))
        with pytest.raises(NiftiError, match="sizeof_hdr"):
            read_nifti(path)

    def test_bad_magic(self, tmp_path):
        path = self._write_valid(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[344:348] = b"ni1\x00"  # the two-file variant is unsupported
        path.write_bytes(bytes(raw))
        with pytest.raises(NiftiError, match="magic"):
            read_nifti(path)

    def test_unsupported_datatype(self, tmp_path):
        path = self._write_valid(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<h", raw, 70, 64)  # float64: out of subset
        path.write_bytes(bytes(raw))
        with pytest.raises(NiftiError, match="datatype"):
            read_nifti(path)

    def test_wrong_dim0(self, tmp_path):
        path = self._write_valid(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<h", raw, 40, 4)
        path.write_bytes(bytes(raw))
        with pytest.raises(NiftiError, match="3D"):
            read_nifti(path)

    def test_non_finite_voxel(self, tmp_path):
        path = self._write_valid(tmp_path)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<f", raw, 352, np.nan)
        path.write_bytes(bytes(raw))
        with pytest.raises(NiftiError, match="non-finite"):
            read_nifti(path)

    def test_truncated_payload(self, tmp_path):
        path = self._write_valid(tmp_path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(NiftiError, match="truncated"):
            read_nifti(path)

    def test_label_request_with_nonbinary_values(self, tmp_path):
        vol = Volume3(np.full((2, 2, 2), 2.0, dtype=np.float32), (1, 1, 1))
        path = tmp_path / "two.nii"
        write_nifti(vol, path)
        with pytest.raises(NiftiError, match="label"):
            read_nifti(path, as_label=True)


class TestWriteErrors:
    def test_mask_value_out_of_label_range(self, tmp_path):
        # a LabelMask can't hold 2, so the writer guard triggers on a Volume3
        # forced into uint8
        vol = Volume3(np.full((2, 2, 2), 300.0, dtype=np.float32), (1, 1, 1))
        with pytest.raises(NiftiError, match="range"):
            write_nifti(vol, tmp_path / "x.nii", datatype=DT_UINT8)

    def test_unwritable_path(self, tmp_path):
        vol = Volume3(np.zeros((2, 2, 2)), (1, 1, 1))
        with pytest.raises(NiftiError, match="cannot write"):
            write_nifti(vol, tmp_path / "no_dir" / "x.nii")


class TestReferenceFixtures:
    """Files produced by the independent writer in tools/."""

    def test_float32_ramp(self):
        vol = read_nifti(DATA_DIR / "ramp_3x4x5_float32.nii")
        assert vol.dims == (3, 4, 5)
        flat = np.asfortranarray(vol.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(60, dtype=np.float32))
        assert vol.spacing == pytest.approx((0.5429, 0.6, 0.7), abs=1e-6)
        assert vol.origin == pytest.approx((-1.5, 2.25, 3.0), abs=1e-6)

    def test_float32_ramp_gzipped(self):
        vol = read_nifti(DATA_DIR / "ramp_3x4x5_float32.nii.gz")
        flat = np.asfortranarray(vol.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(60, dtype=np.float32))

    def test_float32_ramp_big_endian(self):
        vol = read_nifti(DATA_DIR / "ramp_3x4x5_float32_bigendian.nii")
        flat = np.asfortranarray(vol.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(60, dtype=np.float32))

    def test_uint8_ramp(self):
        vol = read_nifti(DATA_DIR / "ramp_3x4x5_uint8.nii")
        flat = np.asfortranarray(vol.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(60, dtype=np.float32))

    def test_int16_shifted_ramp(self):
        vol = read_nifti(DATA_DIR / "shifted_ramp_3x4x5_int16.nii")
        flat = np.asfortranarray(vol.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(-30, 30, dtype=np.float32))
        assert vol.spacing == pytest.approx((0.25, 0.25, 2.0))

    def test_binary_as_label(self):
        mask = read_nifti(DATA_DIR / "binary_3x4x5_uint8.nii", as_label=True)
        assert isinstance(mask, LabelMask)
        flat = np.asfortranarray(mask.voxels).ravel(order="F")
        assert np.array_equal(flat, np.arange(60) % 2)

    def test_fixtures_in_sync_with_generator(self, tmp_path):
        # regenerating must reproduce the committed bytes exactly
        subprocess.run([sys.executable, str(FIXTURE_TOOL), str(tmp_path)],
                       check=True, capture_output=True)
        for committed in sorted(DATA_DIR.iterdir()):
            fresh = tmp_path / committed.name
            assert fresh.read_bytes() == committed.read_bytes(), committed.name

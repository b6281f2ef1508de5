"""PGM slice rendering with mask-boundary overlay."""

import numpy as np
import pytest

from aneuseg.errors import GeometryError, VolumeError
from aneuseg.render import boundary_pixels, render_overlay
from aneuseg.volume import LabelMask, Volume3


def read_pgm(path):
    raw = path.read_bytes()
    magic, dims, maxval, pixels = raw.split(b"\n", 3)
    width, height = (int(v) for v in dims.split())
    assert magic == b"P5" and int(maxval) == 255
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


class TestBoundaryPixels:
    def test_empty(self):
        assert not boundary_pixels(np.zeros((5, 5), dtype=np.uint8)).any()

    def test_single_pixel_is_boundary(self):
        m = np.zeros((5, 5), dtype=np.uint8)
        m[2, 2] = 1
        b = boundary_pixels(m)
        assert b.sum() == 1 and b[2, 2]

    def test_3x3_square_has_8_boundary_pixels(self):
        m = np.zeros((7, 7), dtype=np.uint8)
        m[2:5, 2:5] = 1
        b = boundary_pixels(m)
        assert b.sum() == 8
        assert not b[3, 3]  # the center is interior

    def test_grid_edge_counts_as_background(self):
        m = np.ones((3, 3), dtype=np.uint8)
        assert boundary_pixels(m).sum() == 8  # all but the center


class TestRenderOverlay:
    def test_empty_mask_equals_plain_render(self, tmp_path, rng):
        vox = rng.normal(size=(6, 6, 6)).astype(np.float32)
        vol = Volume3(vox, (1, 1, 1))
        empty = LabelMask(np.zeros((6, 6, 6), dtype=np.uint8), (1, 1, 1))
        img = read_pgm(render_overlay(vol, empty, "z", 3, tmp_path / "a.pgm"))
        sl = vox[:, :, 3].astype(np.float64)
        expect = np.rint((sl - sl.min()) / (sl.max() - sl.min()) * 255).astype(np.uint8)
        assert np.array_equal(img, expect)

    def test_constant_volume_single_voxel_mask(self, tmp_path):
        vol = Volume3(np.full((5, 5, 5), 7.0, dtype=np.float32), (1, 1, 1))
        m = np.zeros((5, 5, 5), dtype=np.uint8)
        m[2, 2, 2] = 1
        img = read_pgm(render_overlay(vol, LabelMask(m, (1, 1, 1)), "z", 2,
                                      tmp_path / "b.pgm"))
        assert img[2, 2] == 255
        assert np.count_nonzero(img) == 1  # flat slice renders as 0 elsewhere

    def test_3x3_square_mask_eight_255_pixels(self, tmp_path):
        vol = Volume3(np.zeros((7, 7, 3), dtype=np.float32), (1, 1, 1))
        m = np.zeros((7, 7, 3), dtype=np.uint8)
        m[2:5, 2:5, 1] = 1
        img = read_pgm(render_overlay(vol, LabelMask(m, (1, 1, 1)), "z", 1,
                                      tmp_path / "c.pgm"))
        assert np.count_nonzero(img == 255) == 8

    @pytest.mark.parametrize("axis,shape", [("x", (6, 5)), ("y", (7, 5)), ("z", (7, 6))])
    def test_axis_selection_shapes(self, tmp_path, rng, axis, shape):
        vol = Volume3(rng.normal(size=(7, 6, 5)).astype(np.float32), (1, 1, 1))
        empty = LabelMask(np.zeros((7, 6, 5), dtype=np.uint8), (1, 1, 1))
        img = read_pgm(render_overlay(vol, empty, axis, 0, tmp_path / "d.pgm"))
        assert img.shape == shape

    def test_index_out_of_range(self, tmp_path):
        vol = Volume3(np.zeros((4, 4, 4)), (1, 1, 1))
        empty = LabelMask(np.zeros((4, 4, 4), dtype=np.uint8), (1, 1, 1))
        with pytest.raises(VolumeError):
            render_overlay(vol, empty, "z", 4, tmp_path / "e.pgm")

    def test_geometry_mismatch(self, tmp_path):
        vol = Volume3(np.zeros((4, 4, 4)), (1, 1, 1))
        other = LabelMask(np.zeros((4, 4, 5), dtype=np.uint8), (1, 1, 1))
        with pytest.raises(GeometryError):
            render_overlay(vol, other, "z", 0, tmp_path / "f.pgm")

    def test_bad_axis(self, tmp_path):
        vol = Volume3(np.zeros((4, 4, 4)), (1, 1, 1))
        empty = LabelMask(np.zeros((4, 4, 4), dtype=np.uint8), (1, 1, 1))
        with pytest.raises(VolumeError):
            render_overlay(vol, empty, "w", 0, tmp_path / "g.pgm")

import numpy as np
import pytest

from autoadv.core.exceptions import DimensionError
from autoadv.visualization.images import dump_images, quantize, read_pnm, stretch, write_pnm


class TestPortableMaps:
    """
    P5/P6 writing and reading.
    """
    def test_grayscale_header_and_pixels(self, tmp_path):
        path = write_pnm(np.ones((4, 5, 1)), tmp_path / "mask")
        assert path.name == "mask.pgm"
        assert path.read_bytes().startswith(b"P5")
        np.testing.assert_array_equal(read_pnm(path), np.full((4, 5, 1), 255, dtype=np.uint8))

    def test_color_header(self, tmp_path):
        path = write_pnm(np.zeros((2, 3, 3)), tmp_path / "img.ppm")
        assert path.name == "img.ppm"
        assert path.read_bytes().startswith(b"P6")
        assert read_pnm(path).shape == (2, 3, 3)

    def test_round_trip_reproduces_quantized_values(self, tmp_path):
        values = np.random.default_rng(0).uniform(size=(6, 7, 1))
        np.testing.assert_array_equal(read_pnm(write_pnm(values, tmp_path / "v")), quantize(values))

    def test_prefix_with_dots_keeps_its_name(self, tmp_path):
        path = write_pnm(np.zeros((2, 2, 1)), tmp_path / "img.v1_mask")
        assert path.name == "img.v1_mask.pgm"

    def test_two_channels_rejected(self, tmp_path):
        with pytest.raises(DimensionError):
            write_pnm(np.zeros((2, 2, 2)), tmp_path / "x")

    def test_quantize_rounds_and_clips(self):
        np.testing.assert_array_equal(quantize(np.array([-0.1, 0.5, 0.2, 1.7])), [0, 128, 51, 255])


class TestDumps:
    """
    The four images written per attacked example.
    """
    def test_unchanged_image_has_black_difference(self, tmp_path):
        x = np.full((3, 3, 1), 0.4)
        paths = dump_images(x, x.copy(), np.zeros((3, 3, 1)), tmp_path / "img_00001")
        assert [p.name for p in paths] == ["img_00001_orig.pgm", "img_00001_adv.pgm", "img_00001_diff.pgm",
                                           "img_00001_mask.pgm"]
        assert not read_pnm(paths[2]).any()

    def test_difference_is_stretched(self, tmp_path):
        x = np.zeros((2, 2, 1))
        x_adv = x.copy()
        x_adv[0, 0, 0], x_adv[1, 1, 0] = 0.05, 0.025
        paths = dump_images(x, x_adv, (x_adv > 0).astype(float), tmp_path / "d")
        diff = read_pnm(paths[2])[:, :, 0]
        assert diff[0, 0] == 255 and diff[1, 1] == 128 and diff[0, 1] == 0

    def test_stretch_of_zeros(self):
        assert not stretch(np.zeros((2, 2, 1))).any()

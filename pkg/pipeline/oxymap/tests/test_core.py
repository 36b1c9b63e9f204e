"""Tests for rasters, masks, metrics, raster I/O and pixel boxes.
"""

# Third-party imports
import numpy as np
import pytest

# Application imports
from common.geometry import PixelBox
from common.logger import LoggerFactory
from common.storage import IDataStoreFactory
from oxymap.core.io import (
    read_mask,
    read_plane,
    read_stack,
    write_mask,
    write_plane,
    write_stack,
)
from oxymap.core.raster import (
    ImagePlane,
    Mask,
    StO2Map,
    apply_mask,
    nmae,
    plane_statistics,
)
from oxymap.errors import (
    ContainerFormatError,
    DimensionMismatchError,
    EmptyMaskError,
    OxymapError,
    ZeroDenominatorError,
)


def _brute_nmae(pred, gt, bits):
    num = den = 0.0
    for r in range(gt.shape[0]):
        for c in range(gt.shape[1]):
            if not bits[r, c] or np.isnan(pred[r, c]) or np.isnan(gt[r, c]):
                continue
            num += abs(pred[r, c] - gt[r, c])
            den += gt[r, c]
    return num / den


def test_image_plane_rejects_bad_input():
    with pytest.raises(DimensionMismatchError):
        ImagePlane(data=np.zeros(4))
    with pytest.raises(ValueError):
        ImagePlane(data=np.full((2, 2), np.inf))
    with pytest.raises(ValueError):
        ImagePlane(data=np.zeros((2, 2)), pitch_mm=0.0)


def test_image_plane_is_read_only():
    plane = ImagePlane(data=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        plane.data[0, 0] = 1.0


def test_errors_share_a_value_error_root():
    assert issubclass(EmptyMaskError, OxymapError)
    assert issubclass(OxymapError, ValueError)


def test_apply_mask_invalidates_excluded_pixels():
    plane = ImagePlane(data=np.arange(6, dtype=float).reshape(2, 3))
    bits = np.array([[True, False, True], [False, True, True]])
    masked = apply_mask(plane, Mask(bits=bits))
    assert np.array_equal(masked.valid, bits)
    assert np.array_equal(masked.data[bits], plane.data[bits])


def test_apply_mask_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        apply_mask(ImagePlane(np.zeros((2, 2))), Mask.full(3, 3))


def test_plane_statistics_skip_invalid_pixels():
    data = np.array([[1.0, np.nan], [3.0, 5.0]])
    stats = plane_statistics(ImagePlane(data=data))
    assert stats.count == 3
    assert stats.mean == pytest.approx(3.0)
    assert stats.minimum == 1.0 and stats.maximum == 5.0


def test_plane_statistics_empty():
    with pytest.raises(EmptyMaskError):
        plane_statistics(ImagePlane(data=np.full((2, 2), np.nan)))


def test_sto2_map_rejects_out_of_range_values():
    with pytest.raises(ValueError):
        StO2Map.from_array(np.array([[0.5, 1.2]]))
    StO2Map.from_array(np.array([[0.0, np.nan, 1.0]]))


def test_nmae_matches_brute_force_summation():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        h, w = rng.integers(1, 7, size=2)
        gt = rng.uniform(0.05, 1.0, size=(h, w))
        pred = rng.uniform(0.0, 1.0, size=(h, w))
        pred[rng.random((h, w)) < 0.1] = np.nan
        bits = rng.random((h, w)) < 0.7
        bits[0, 0] = True
        pred[0, 0] = 0.5
        got = nmae(
            StO2Map.from_array(pred), StO2Map.from_array(gt), Mask(bits=bits)
        )
        assert got == pytest.approx(_brute_nmae(pred, gt, bits), abs=1e-12)


def test_nmae_identical_maps_score_zero():
    gt = StO2Map.from_array(np.full((4, 4), 0.7))
    assert nmae(gt, gt, Mask.full(4, 4)) == 0.0


def test_nmae_failures():
    gt = StO2Map.from_array(np.zeros((2, 2)))
    pred = StO2Map.from_array(np.full((2, 2), 0.5))
    with pytest.raises(ZeroDenominatorError):
        nmae(pred, gt, Mask.full(2, 2))
    with pytest.raises(EmptyMaskError):
        nmae(pred, gt, Mask(bits=np.zeros((2, 2), dtype=bool)))
    with pytest.raises(DimensionMismatchError):
        nmae(pred, gt, Mask.full(3, 2))


def test_plane_io_preserves_values_and_invalid_pixels(tmp_path):
    data = np.array([[0.25, np.nan, 1.5], [2.0, -3.0, 0.0]])
    plane = ImagePlane(data=data, pitch_mm=0.3125, semantic="rd_dc@659")
    path = write_plane(plane, tmp_path / "plane.f32")
    assert path.exists()
    assert (tmp_path / "plane.json").exists()

    loaded = read_plane(tmp_path / "plane")
    assert loaded.pitch_mm == 0.3125
    assert loaded.semantic == "rd_dc@659"
    assert np.array_equal(loaded.valid, plane.valid)
    assert np.allclose(loaded.data[loaded.valid], data[plane.valid])


def test_stack_io_keeps_channels_outermost(tmp_path):
    data = np.stack([np.full((2, 3), k, dtype=float) for k in range(3)])
    write_stack(data, tmp_path / "stack.f32")
    loaded, sidecar = read_stack(tmp_path / "stack.f32")
    assert sidecar.channels == 3
    assert np.array_equal(loaded, data)
    with pytest.raises(DimensionMismatchError):
        read_plane(tmp_path / "stack.f32")


def test_truncated_raster(tmp_path):
    write_plane(ImagePlane(np.ones((4, 4))), tmp_path / "a.f32")
    with open(tmp_path / "a.f32", "r+b") as f:
        f.truncate(12)
    with pytest.raises(ContainerFormatError):
        read_plane(tmp_path / "a.f32")


def test_mask_io(tmp_path):
    bits = np.array([[True, False], [False, True]])
    write_mask(Mask(bits=bits), tmp_path / "m.u8")
    assert np.array_equal(read_mask(tmp_path / "m.u8").bits, bits)

    write_plane(
        ImagePlane(np.array([[1.0, 0.0], [np.nan, 2.0]])), tmp_path / "m2.f32"
    )
    assert np.array_equal(
        read_mask(tmp_path / "m2.f32").bits,
        np.array([[True, False], [False, True]]),
    )


def test_pixel_box_parse_and_fit():
    box = PixelBox.parse("10,20,30,40")
    assert (box.bottom, box.right) == (40, 60)
    assert box.fits_within(40, 60)
    assert not box.fits_within(39, 60)
    with pytest.raises(ValueError):
        PixelBox.parse("1,2,3")
    with pytest.raises(ValueError):
        PixelBox.parse("0,0,0,5")


def test_pixel_box_tiles_patch_grid():
    box = PixelBox.full(512, 688)
    assert len(box.tile(256, 64, 64)) == 35
    assert len(box.tile(256, 72, 72)) == 28
    assert all(w.fits_within(512, 688) for w in box.tile(256, 64, 64))


def test_pixel_box_crop_and_shrink():
    array = np.arange(3 * 6 * 6).reshape(3, 6, 6)
    box = PixelBox(row=1, col=2, height=3, width=2)
    assert box.crop(array).shape == (3, 3, 2)
    assert box.crop(array)[0, 0, 0] == array[0, 1, 2]
    assert PixelBox.full(6, 6).shrink(2) == PixelBox(
        row=2, col=2, height=2, width=2
    )
    with pytest.raises(ValueError):
        PixelBox.full(4, 4).shrink(2)
    with pytest.raises(ValueError):
        PixelBox(row=5, col=5, height=2, width=2).crop(array)


def test_logger_attaches_one_handler():
    first = LoggerFactory.get("OXYMAP.TEST")
    again = LoggerFactory.get("OXYMAP.TEST", "DEBUG")
    assert first is again
    assert len(again.handlers) == 1
    assert not again.propagate


def test_local_store_creates_parents(tmp_path):
    store = IDataStoreFactory.get()
    assert store.resolve(tmp_path / "a.txt") == tmp_path / "a.txt"
    with store.open_file(tmp_path / "x" / "y" / "a.txt", "w") as f:
        f.write("ok")
    with store.open_file(tmp_path / "x" / "y" / "a.txt") as f:
        assert f.read() == "ok"

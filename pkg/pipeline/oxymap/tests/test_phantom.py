"""Tests for synthetic scenes, rendering, input encoding, training
patches and occlusion sequences.
"""

# Third-party imports
import numpy as np
import pandas as pd
import pytest

# Application imports
from common.geometry import PixelBox
from oxymap.errors import (
    DimensionMismatchError,
    FrequencyMismatchError,
    ManifestError,
)
from oxymap.phantom.dataset import (
    MANIFEST_NAME,
    load_patch,
    make_dataset,
    make_sample,
    read_manifest,
)
from oxymap.phantom.occlusion import (
    OcclusionProtocol,
    render_occlusion_sequence,
)
from oxymap.phantom.render import make_reference, render_optical
from oxymap.phantom.scene import (
    PhantomConfig,
    generate_scene,
    load_phantom_config,
)
from oxymap.phantom.tensor import (
    InputTensor,
    build_input_tensor,
    checkerboard_parity,
    in_phase_crop,
)
from oxymap.photon.forward import diffuse_reflectance


def test_scenes_are_reproducible():
    config = PhantomConfig(height=16, width=24, style="smooth-blob")
    a, b = generate_scene(config, 3), generate_scene(config, 3)
    assert np.array_equal(a.sto2.data, b.sto2.data)
    assert not np.array_equal(
        a.sto2.data, generate_scene(config, 4).sto2.data
    )


def test_flat_scene_uses_fixed_values(flat_scene):
    assert np.allclose(flat_scene.sto2.data, 0.7)
    assert np.allclose(flat_scene.thb, 0.05)
    assert np.allclose(flat_scene.musp(659), 1.2 * (659 / 800) ** -1)


def test_two_region_scene_splits_halves():
    config = PhantomConfig(height=8, width=10, style="two-region")
    sto2 = generate_scene(config, 0).sto2.data
    assert len(np.unique(sto2[:, :5])) == 1
    assert len(np.unique(sto2[:, 5:])) == 1


def test_blob_scene_stays_within_ranges(blob_scene):
    lo, hi = PhantomConfig().sto2_range
    values = blob_scene.sto2.data
    assert values.min() >= lo - 1e-12 and values.max() <= hi + 1e-12
    assert values.max() - values.min() > 0.5 * (hi - lo)


def test_scene_absorption_follows_the_basis(flat_scene):
    row = flat_scene.basis.select([659, 851]).epsilon[1]
    expected = row[0] * 0.7 * 0.05 + row[1] * 0.3 * 0.05
    assert np.allclose(flat_scene.mua(851), expected)


def test_saturation_swap_keeps_hemoglobin_and_scattering(flat_scene):
    swapped = flat_scene.with_sto2(np.full(flat_scene.shape, 0.4))
    assert np.allclose(swapped.sto2.data, 0.4)
    assert np.allclose(swapped.thb, flat_scene.thb)
    assert swapped.musp_planes is flat_scene.musp_planes


def test_phantom_config_validation(tmp_path):
    with pytest.raises(ValueError):
        PhantomConfig(sto2_range=(0.8, 0.2))
    with pytest.raises(ValueError):
        PhantomConfig(style="stripes")

    (tmp_path / "scene.yaml").write_text(
        "height: 32\nwidth: 48\nstyle: two-region\nsto2_range: [0.4, 0.9]\n"
    )
    config = load_phantom_config(tmp_path / "scene.yaml")
    assert (config.height, config.width) == (32, 48)
    assert config.sto2_range == (0.4, 0.9)


def test_render_optical_structured_signal():
    mua, musp = np.full((2, 32), 0.02), np.full((2, 32), 1.0)
    img = render_optical(mua, musp, 0.2, np.pi / 2, 0.3125)
    dc = diffuse_reflectance(0.02, 1.0, 0.0)
    ac = diffuse_reflectance(0.02, 1.0, 0.2)
    assert img.data[0, 0] == pytest.approx(dc + ac)
    with pytest.raises(FrequencyMismatchError):
        render_optical(mua, musp, 2.0, 0.0, 0.3125)


def test_checkerboard_parity_is_absolute():
    parity = checkerboard_parity((4, 4))
    assert parity[0, 0] and not parity[0, 1] and parity[1, 1]
    assert np.array_equal(
        checkerboard_parity((2, 2), origin=(1, 2)), parity[1:3, 2:4]
    )


def test_input_tensor_channels():
    shape = (20, 35)
    ref659 = make_reference(shape, 0.3125, 659)
    ref851 = make_reference(shape, 0.3125, 851, mua=0.02, musp=0.8)
    img659 = ref659.m_dc_ref.with_data(np.full(shape, 0.3))
    img851 = ref851.m_dc_ref.with_data(np.full(shape, 0.4))

    tensor = build_input_tensor(img659, img851, ref659, ref851)
    assert tensor.shape == (16, 32)
    assert np.allclose(tensor.ch1, 0.3 / ref659.m_dc_ref.data[:16, :32])
    assert np.allclose(tensor.ch2, 0.4 / ref851.m_dc_ref.data[:16, :32])
    assert tensor.ch3[0, 0] == pytest.approx(ref659.ratio[0, 0])
    assert tensor.ch3[0, 1] == pytest.approx(ref851.ratio[0, 1])
    assert tensor.ch3[3, 3] == pytest.approx(ref659.ratio[3, 3])

    with pytest.raises(DimensionMismatchError):
        build_input_tensor(img659, img851, ref659, ref851, multiple=32)
    with pytest.raises(DimensionMismatchError):
        build_input_tensor(
            img659, img851.with_data(np.ones((20, 34))), ref659, ref851
        )


def test_input_tensor_crop_tracks_origin():
    data = np.zeros((3, 8, 8))
    data[2] = checkerboard_parity((8, 8))
    tensor = InputTensor(data)
    cropped = tensor.crop(PixelBox(row=1, col=2, height=4, width=4))
    assert cropped.origin == (1, 2)
    assert np.array_equal(
        cropped.ch3 == 1, checkerboard_parity((4, 4), cropped.origin)
    )
    flipped = tensor.flip(horizontal=True, vertical=False)
    assert np.array_equal(flipped.ch3, data[2][:, ::-1])
    assert np.array_equal(
        flipped.ch3 == 1, checkerboard_parity(flipped.shape, flipped.origin)
    )


@pytest.mark.parametrize("horizontal", [False, True])
@pytest.mark.parametrize("vertical", [False, True])
@pytest.mark.parametrize("shape", [(6, 8), (7, 8), (6, 9), (5, 7)])
def test_flipped_tensor_origin_follows_parity(shape, horizontal, vertical):
    data = np.zeros((3,) + shape)
    data[2] = checkerboard_parity(shape, (1, 0))
    tensor = InputTensor(data, origin=(1, 0))
    flipped = tensor.flip(horizontal=horizontal, vertical=vertical)
    assert np.array_equal(
        flipped.ch3 == 1, checkerboard_parity(flipped.shape, flipped.origin)
    )


def test_in_phase_crop_nudges_or_drops_mirrors():
    assert in_phase_crop((64, 96), 32, 16, 32, True, False) == (
        16,
        33,
        True,
        False,
    )
    assert in_phase_crop((64, 96), 32, 0, 64, True, False) == (
        0,
        63,
        True,
        False,
    )
    assert in_phase_crop((64, 96), 32, 0, 17, False, False) == (
        0,
        18,
        False,
        False,
    )
    assert in_phase_crop((64, 96), 32, 0, 0, True, True) == (
        0,
        0,
        True,
        True,
    )
    assert in_phase_crop((32, 32), 32, 0, 0, False, True) == (
        0,
        0,
        False,
        False,
    )


def test_dataset_patches_and_manifest(blob_scene, tmp_path):
    sample = make_sample(blob_scene, "scene_000")
    assert sample.tensor.shape == (64, 96)

    manifest = make_dataset(
        [sample],
        tmp_path,
        patch_size=32,
        stride_range=(16, 16),
        augment=False,
    )
    assert len(manifest) == 3 * 5
    assert (tmp_path / MANIFEST_NAME).exists()
    assert not manifest[["flip_h", "flip_v"]].any().any()

    loaded = read_manifest(tmp_path)
    assert loaded["input_path"].tolist() == manifest["input_path"].tolist()
    record = loaded.iloc[7]
    x, y = load_patch(record, tmp_path)
    box = PixelBox(
        row=int(record["row"]), col=int(record["col"]), height=32, width=32
    )
    assert x.shape == (3, 32, 32)
    assert np.allclose(x, box.crop(sample.tensor.data), rtol=1e-6)
    assert np.allclose(y, box.crop(blob_scene.sto2.data), rtol=1e-6)


def test_dataset_flips_inputs_and_targets_together(blob_scene, tmp_path):
    sample = make_sample(blob_scene, "s")
    manifest = make_dataset(
        [sample],
        tmp_path,
        patch_size=32,
        stride_range=(32, 32),
        flip_prob=1.0,
        seed=2,
    )
    assert manifest["flip_h"].all() and manifest["flip_v"].all()
    record = manifest.iloc[0]
    x, y = load_patch(record, tmp_path)
    box = PixelBox(row=0, col=0, height=32, width=32)
    assert np.allclose(y, box.crop(blob_scene.sto2.data)[::-1, ::-1])
    assert np.allclose(x, box.crop(sample.tensor.data)[:, ::-1, ::-1])


def test_dataset_patches_stay_in_checkerboard_phase(blob_scene, tmp_path):
    sample = make_sample(blob_scene, "s")
    manifest = make_dataset(
        [sample],
        tmp_path,
        patch_size=32,
        stride_range=(17, 17),
        flip_prob=0.5,
        seed=4,
    )
    assert manifest[["flip_h", "flip_v"]].any().any()

    idx = np.arange(32)
    phase = checkerboard_parity((32, 32))
    for _, record in manifest.iterrows():
        x, _ = load_patch(record, tmp_path)
        rows = int(record["row"]) + (idx[::-1] if record["flip_v"] else idx)
        cols = int(record["col"]) + (idx[::-1] if record["flip_h"] else idx)
        source = sample.tensor.data[:, rows[:, np.newaxis], cols]
        assert np.allclose(x, source, rtol=1e-6)
        assert np.array_equal(
            (rows[:, np.newaxis] + cols[np.newaxis, :]) % 2 == 0, phase
        )


def test_dataset_rejects_small_scenes(blob_scene, tmp_path):
    with pytest.raises(DimensionMismatchError):
        make_dataset(
            [make_sample(blob_scene, "s")], tmp_path, patch_size=128
        )


def test_manifest_requires_columns(tmp_path):
    (tmp_path / MANIFEST_NAME).write_text('{"scene": "a"}\n')
    with pytest.raises(ManifestError):
        read_manifest(tmp_path)


def test_occlusion_sequence_outputs(blob_scene, tmp_path):
    protocol = OcclusionProtocol(
        baseline_s=2.0,
        occlusion_s=2.0,
        release_s=2.0,
        dt_s=0.5,
        checkpoint_every_s=2.0,
    )
    frames = render_occlusion_sequence(blob_scene, protocol, tmp_path)
    assert len(frames) == 12
    assert frames["wavelength_nm"].tolist()[:3] == [659.0, 851.0, 659.0]
    assert (tmp_path / frames["path"].iloc[-1]).exists()
    assert (tmp_path / "reference.json").exists()

    checkpoints = pd.read_csv(tmp_path / "checkpoints.csv")
    assert checkpoints["t"].tolist() == [0.0, 2.0, 4.0, 6.0]
    assert checkpoints["sto2"].tolist() == [0.8, 0.4, 0.8, 0.8]


def test_occlusion_protocol_needs_two_frames():
    with pytest.raises(ValueError):
        OcclusionProtocol(
            baseline_s=0.5, occlusion_s=0.0, release_s=0.0, dt_s=0.5
        )

"""Tests for the management commands that run each pipeline stage.
"""

# Standard library imports
import json
from io import StringIO

# Third-party imports
import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

# Application imports
from oxymap.core.io import read_plane, read_stack, write_stack
from oxymap.management.base import parse_keyed
from oxymap.neural.engine import (
    GeneratorWeights,
    forward_generator,
    save_weights,
)
from oxymap.neural.manifest import build_generator_manifest
from oxymap.phantom.tensor import InputTensor, build_input_tensor
from oxymap.sfdi.calibration import load_reference_bundle, reference_at


def _run(name, *args):
    """Runs a command and parses its JSON summary."""
    out = StringIO()
    call_command(name, *args, stdout=out)
    return json.loads(out.getvalue())


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A lookup table and one rendered phantom scene."""
    root = tmp_path_factory.mktemp("workspace")
    (root / "scene.yaml").write_text(
        "height: 64\nwidth: 256\nsto2: 0.7\nthb: 0.05\nmusp: 1.2\n"
    )
    _run("lut", "--out", str(root / "lut.bin"))
    _run(
        "phantom",
        "gen",
        "--out",
        str(root / "phantom"),
        "--config",
        str(root / "scene.yaml"),
        "--seed",
        "3",
    )
    return root


def test_lut_summary(tmp_path):
    summary = _run(
        "lut", "--out", str(tmp_path / "lut.bin"), "--grid", "16", "12"
    )
    assert summary["stage"] == "lut"
    assert summary["shape"] == [16, 12]
    assert (tmp_path / "lut.bin").exists()


def test_phantom_writes_scene_files(workspace):
    scene_dir = workspace / "phantom" / "scene_000"
    assert (scene_dir / "reference.json").exists()
    assert (scene_dir / "sfdi_659_ac_2.f32").exists()
    assert (scene_dir / "snapshot_851.f32").exists()
    assert read_plane(scene_dir / "sto2.f32").shape == (64, 256)


def test_conventional_and_snapshot_stages(workspace):
    scene_dir = workspace / "phantom" / "scene_000"
    lut = str(workspace / "lut.bin")
    sfdi = _run(
        "sfdi",
        "--stack",
        str(scene_dir),
        "--lut",
        lut,
        "--out",
        str(workspace / "sfdi"),
        "--sto2",
    )
    assert set(sfdi["wavelengths"]) == {"659", "691", "731", "851"}
    assert sfdi["wavelengths"]["659"]["out_of_gamut_fraction"] < 0.01

    ssop = _run(
        "ssop",
        "--stack",
        str(scene_dir),
        "--lut",
        lut,
        "--out",
        str(workspace / "ssop.f32"),
    )
    assert ssop["shape"] == [64, 256]
    assert ssop["valid_pixels"] > 0

    report = _run(
        "eval",
        "--pred",
        f"ssop={workspace / 'ssop.f32'}",
        "--pred",
        f"sfdi={workspace / 'sfdi' / 'sto2.f32'}",
        "--gt",
        str(scene_dir / "sto2.f32"),
        "--out",
        str(workspace / "report.json"),
    )
    assert report["nmae"]["sfdi"] < 0.03
    assert report["nmae"]["ssop"] < 0.05
    assert 0 < report["pixels"] <= ssop["valid_pixels"]
    saved = json.loads((workspace / "report.json").read_text())
    assert saved["nmae"] == report["nmae"]


def test_single_prediction_eval(workspace):
    truth = str(workspace / "phantom" / "scene_000" / "sto2.f32")
    report = _run("eval", "--pred", truth, "--gt", truth)
    assert report["nmae"] == 0.0
    assert report["mask_pixels"] == 64 * 256


def test_generator_inference(workspace, tmp_path):
    weights = GeneratorWeights.random(
        build_generator_manifest(channels=[2, 4]), seed=1
    )
    save_weights(weights, tmp_path / "g.oxw")
    summary = _run(
        "infer",
        "--stack",
        str(workspace / "phantom" / "scene_000"),
        "--weights",
        str(tmp_path / "g.oxw"),
        "--out",
        str(tmp_path / "sto2.f32"),
        "--threads",
        "2",
    )
    assert summary["shape"] == [64, 256]
    assert summary["wavelengths"] == [659.0, 851.0]


def test_failures_name_the_stage(workspace, tmp_path):
    with pytest.raises(CommandError, match="Loading lookup table"):
        call_command(
            "sfdi",
            "--stack",
            str(workspace / "phantom" / "scene_000"),
            "--lut",
            str(tmp_path / "missing.bin"),
            "--out",
            str(tmp_path / "out"),
            stdout=StringIO(),
        )
    with pytest.raises(CommandError, match="Loading phantom config"):
        call_command(
            "phantom",
            "gen",
            "--out",
            str(tmp_path),
            "--count",
            "0",
            stdout=StringIO(),
        )
    with pytest.raises(CommandError):
        call_command("ssop", "--lut", "x", "--out", "y", stdout=StringIO())
    with pytest.raises(CommandError):
        call_command("calibrate")


def test_keyed_arguments_accept_both_separators():
    assert parse_keyed(["659:a.f32", "851=b:c.f32"], "--mua") == {
        659.0: "a.f32",
        851.0: "b:c.f32",
    }
    with pytest.raises(CommandError):
        parse_keyed(["a.f32"], "--mua")
    with pytest.raises(CommandError):
        parse_keyed(["659:a.f32", "659.0:b.f32"], "--mua")


def test_conventional_flags_name_each_image(workspace, tmp_path):
    scene_dir = workspace / "phantom" / "scene_000"
    lut = str(workspace / "lut.bin")
    _run(
        "sfdi",
        "--stack",
        str(scene_dir),
        "--lut",
        lut,
        "--out",
        str(tmp_path / "stack"),
        "--wavelengths",
        "659",
        "851",
    )

    images = []
    for band in ("dc", "ac"):
        for p in range(3):
            fpath = scene_dir / f"sfdi_659_{band}_{p}.f32"
            images += [f"--{band}{p}", str(fpath)]
    summary = _run(
        "sfdi",
        *images,
        "--ref",
        str(scene_dir / "reference.json"),
        "--wavelength",
        "659",
        "--lut",
        lut,
        "--out",
        str(tmp_path / "op.f32"),
    )
    assert summary["wavelength"] == 659.0
    data, sidecar = read_stack(tmp_path / "op.f32")
    assert sidecar.channels == 2
    for k, quantity in enumerate(("mua", "musp")):
        expected = read_plane(tmp_path / "stack" / f"{quantity}_659.f32")
        assert np.array_equal(data[k], expected.data, equal_nan=True)

    with pytest.raises(CommandError, match="pass --wavelength"):
        call_command(
            "sfdi",
            *images,
            "--ref",
            str(scene_dir / "reference.json"),
            "--lut",
            lut,
            "--out",
            str(tmp_path / "x.f32"),
            stdout=StringIO(),
        )
    with pytest.raises(CommandError, match="--ac2"):
        call_command(
            "sfdi", *images[:-2], "--lut", lut, "--out", "y", stdout=StringIO()
        )

    # Saturation from the colon form, the equals form and several workers
    outputs = []
    for sep, workers in ((":", "1"), ("=", "3")):
        out = tmp_path / f"sto2_{workers}.f32"
        _run(
            "sto2",
            "--mua",
            f"659{sep}{tmp_path / 'stack' / 'mua_659.f32'}",
            "--mua",
            f"851{sep}{tmp_path / 'stack' / 'mua_851.f32'}",
            "--out",
            str(out),
            "--workers",
            workers,
        )
        outputs.append(read_plane(out).data)
    assert np.array_equal(outputs[0], outputs[1], equal_nan=True)


def test_snapshot_flags_name_each_wavelength(workspace, tmp_path):
    scene_dir = workspace / "phantom" / "scene_000"
    lut = str(workspace / "lut.bin")
    _run(
        "ssop",
        "--stack",
        str(scene_dir),
        "--lut",
        lut,
        "--out",
        str(tmp_path / "stack.f32"),
    )
    summary = _run(
        "ssop",
        "--img659",
        str(scene_dir / "snapshot_659.f32"),
        "--img851",
        str(scene_dir / "snapshot_851.f32"),
        "--ref",
        str(scene_dir / "reference.json"),
        "--lut",
        lut,
        "--out",
        str(tmp_path / "named.f32"),
        "--lp",
        "0.5",
        "--hpw",
        "0.5",
    )
    assert summary["wavelengths"] == [659.0, 851.0]
    assert np.array_equal(
        read_plane(tmp_path / "named.f32").data,
        read_plane(tmp_path / "stack.f32").data,
        equal_nan=True,
    )


def test_generator_inference_from_encoded_input(workspace, tmp_path):
    scene_dir = workspace / "phantom" / "scene_000"
    weights = GeneratorWeights.random(
        build_generator_manifest(channels=[2, 4]), seed=1
    )
    save_weights(weights, tmp_path / "g.oxw")
    refs = load_reference_bundle(scene_dir / "reference.json")
    tensor = build_input_tensor(
        read_plane(scene_dir / "snapshot_659.f32"),
        read_plane(scene_dir / "snapshot_851.f32"),
        reference_at(refs, 659),
        reference_at(refs, 851),
    )
    write_stack(
        tensor.data,
        tmp_path / "t.f32",
        pitch_mm=tensor.pitch_mm,
        semantic="input",
    )

    summary = _run(
        "infer",
        "--weights",
        str(tmp_path / "g.oxw"),
        "--input",
        str(tmp_path / "t.f32"),
        "--out",
        str(tmp_path / "sto2.f32"),
        "--threads",
        "2",
    )
    assert summary["shape"] == [64, 256]
    assert summary["wavelengths"] is None

    data, _ = read_stack(tmp_path / "t.f32")
    expected = forward_generator(InputTensor(data), weights, threads=1)
    got = read_plane(tmp_path / "sto2.f32")
    assert np.allclose(got.data, expected.data, rtol=0, atol=1e-7)

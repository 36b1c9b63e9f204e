"""Tests for the double-precision generator engine, its manifest and
the OXW container.
"""

# Standard library imports
from concurrent.futures import ThreadPoolExecutor

# Third-party imports
import numpy as np
import pytest

# Application imports
from oxymap.errors import (
    ContainerFormatError,
    DimensionMismatchError,
    ManifestError,
)
from oxymap.neural.container import decode_oxw, encode_oxw
from oxymap.neural.engine import (
    OUTPUT_NODE,
    ActivationOracle,
    GeneratorWeights,
    benchmark_inference,
    forward_generator,
    load_oracle,
    load_weights,
    run_generator,
    save_oracle,
    save_weights,
)
from oxymap.neural.manifest import INPUT_NODE, build_generator_manifest
from oxymap.neural.ops import (
    activate,
    conv2d_3x3,
    maxpool_2x2,
    upconv_3x3,
)
from oxymap.phantom.tensor import InputTensor


@pytest.fixture(scope="module")
def tiny_weights():
    manifest = build_generator_manifest(channels=[2, 4])
    return GeneratorWeights.random(manifest, seed=3, std=0.3)


def _loop_conv(x, w, b, stride=1, pad=1):
    c_in, h, wd = x.shape
    xp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
    xp[:, pad : pad + h, pad : pad + wd] = x
    h_out = (h + 2 * pad - 3) // stride + 1
    w_out = (wd + 2 * pad - 3) // stride + 1
    out = np.zeros((w.shape[0], h_out, w_out))
    for o in range(w.shape[0]):
        for r in range(h_out):
            for c in range(w_out):
                acc = b[o]
                for i in range(c_in):
                    for di in range(3):
                        for dj in range(3):
                            acc += (
                                w[o, i, di, dj]
                                * xp[i, r * stride + di, c * stride + dj]
                            )
                out[o, r, c] = acc
    return out


def _loop_upconv(x, w, b, stride=2, padding=1, output_padding=1):
    c_in, h, wd = x.shape
    c_out = w.shape[1]
    full = np.zeros(
        (
            c_out,
            (h - 1) * stride + 3 + output_padding,
            (wd - 1) * stride + 3 + output_padding,
        )
    )
    for i in range(c_in):
        for r in range(h):
            for c in range(wd):
                for o in range(c_out):
                    for di in range(3):
                        for dj in range(3):
                            full[o, r * stride + di, c * stride + dj] += (
                                x[i, r, c] * w[i, o, di, dj]
                            )
    h_out = (h - 1) * stride - 2 * padding + 3 + output_padding
    w_out = (wd - 1) * stride - 2 * padding + 3 + output_padding
    crop = full[:, padding : padding + h_out, padding : padding + w_out]
    return crop + b[:, np.newaxis, np.newaxis]


def _loop_generator(x, weights):
    """Walks the manifest graph with the loop kernels."""
    nodes = {INPUT_NODE: x}
    for spec in weights.manifest.layers:
        h = sum(nodes[n] for n in spec.inputs)
        if spec.pool:
            h = maxpool_2x2(h)
        w, b = weights.layer(spec)
        if spec.kind == "upconv3x3":
            y = _loop_upconv(h, w, b)
        else:
            y = _loop_conv(h, w, b)
        nodes[spec.name] = activate(y, spec.activation, spec.slope)
    return nodes[weights.manifest.layers[-1].name]


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_reference(stride):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 7, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    got = conv2d_3x3(x, w, b, stride=stride)
    assert np.allclose(got, _loop_conv(x, w, b, stride=stride), atol=1e-12)


def test_conv_banding_does_not_change_results():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 9, 5))
    w = rng.normal(size=(2, 2, 3, 3))
    b = rng.normal(size=2)
    with ThreadPoolExecutor(3) as pool:
        banded = conv2d_3x3(x, w, b, executor=pool, band_rows=2)
    assert np.allclose(banded, conv2d_3x3(x, w, b), atol=1e-12)


def test_upconv_matches_loop_reference():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=2)
    got = upconv_3x3(x, w, b)
    assert got.shape == (2, 8, 10)
    assert np.allclose(got, _loop_upconv(x, w, b), atol=1e-12)


def test_kernel_failures():
    x = np.zeros((2, 4, 4))
    with pytest.raises(DimensionMismatchError):
        conv2d_3x3(x, np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(DimensionMismatchError):
        conv2d_3x3(x, np.zeros((1, 2, 3, 3)), np.zeros(2))
    with pytest.raises(DimensionMismatchError):
        maxpool_2x2(np.zeros((1, 3, 4)))
    with pytest.raises(ValueError):
        upconv_3x3(x, np.zeros((2, 1, 3, 3)), np.zeros(1), output_padding=2)
    with pytest.raises(ValueError):
        activate(x, "gelu")


def test_maxpool_and_activations():
    x = np.arange(16, dtype=float).reshape(1, 4, 4)
    assert maxpool_2x2(x).tolist() == [[[5.0, 7.0], [13.0, 15.0]]]
    assert activate(np.array([-1.0, 2.0]), "leaky_relu", 0.2).tolist() == [
        -0.2,
        2.0,
    ]


def test_default_manifest_shape():
    manifest = build_generator_manifest()
    assert manifest.size_multiple == 16
    assert manifest.layer_names[0] == "enc1.conv1"
    assert manifest.layers[-1].activation == "tanh"
    skip = next(s for s in manifest.layers if s.name == "dec1.conv1")
    assert skip.inputs == ["dec1.up", "enc1.conv5"]
    assert len(manifest.layers) == 5 * 4 + 5 + 4 * 6 + 1


def test_manifest_rejects_miswired_graphs():
    manifest = build_generator_manifest(channels=[2, 4])
    broken = manifest.model_copy(deep=True)
    broken.layers[3].inputs = ["missing"]
    with pytest.raises(ManifestError):
        broken.validate_graph()

    broken = manifest.model_copy(deep=True)
    broken.layers[-1].activation = "relu"
    with pytest.raises(ManifestError):
        broken.validate_graph()


def test_weights_must_match_manifest(tiny_weights):
    tensors = dict(tiny_weights.tensors)
    tensors.pop("final.bias")
    with pytest.raises(ManifestError):
        GeneratorWeights(tiny_weights.manifest, tensors)
    tensors["final.bias"] = np.zeros(2)
    with pytest.raises(ManifestError):
        GeneratorWeights(tiny_weights.manifest, tensors)


def test_zero_weights_predict_half_saturation():
    weights = GeneratorWeights.zeros(build_generator_manifest(channels=[2]))
    sto2 = forward_generator(np.ones((3, 8, 8)), weights, threads=1)
    assert np.array_equal(sto2.data, np.full((8, 8), 0.5))


def test_engine_matches_loop_walk(tiny_weights):
    x = np.random.default_rng(4).uniform(size=(3, 8, 8))
    trace = {}
    got = run_generator(x, tiny_weights, threads=1, trace=trace)
    assert got.shape == (1, 8, 8)
    assert np.allclose(got, _loop_generator(x, tiny_weights), atol=1e-10)
    assert set(trace) == set(tiny_weights.manifest.layer_names)


@pytest.mark.parametrize("threads", [1, 3])
def test_engine_matches_committed_oracle(reference_generator, threads):
    weights, oracle = reference_generator
    assert (
        weights.manifest.model_dump()
        == build_generator_manifest(channels=[2]).model_dump()
    )
    assert oracle.input.shape == (3, 4, 6)
    trace = {}
    got = run_generator(oracle.input, weights, threads=threads, trace=trace)
    for name in weights.manifest.layer_names:
        np.testing.assert_allclose(
            trace[name], oracle.activations[name], rtol=0, atol=1e-6
        )
    np.testing.assert_allclose(got, oracle.output, rtol=0, atol=1e-6)
    assert (got > 0).any() and (got < 0).any()


def test_engine_is_thread_count_invariant(tiny_weights):
    x = np.random.default_rng(5).uniform(size=(3, 64, 48))
    single = run_generator(x, tiny_weights, threads=1)
    assert np.array_equal(single, run_generator(x, tiny_weights, threads=4))


def test_engine_rejects_unaligned_inputs(tiny_weights):
    with pytest.raises(DimensionMismatchError):
        run_generator(np.zeros((3, 8, 10)), tiny_weights)
    with pytest.raises(DimensionMismatchError):
        run_generator(np.zeros((2, 8, 8)), tiny_weights)


def test_forward_keeps_the_tensor_pitch(tiny_weights):
    tensor = InputTensor(np.zeros((3, 8, 8)), pitch_mm=0.3125)
    sto2 = forward_generator(tensor, tiny_weights, threads=1)
    assert sto2.plane.pitch_mm == 0.3125
    assert np.all((sto2.data >= 0) & (sto2.data <= 1))


def test_weights_container_round_trip(tiny_weights, tmp_path):
    weights = GeneratorWeights(
        tiny_weights.manifest, tiny_weights.tensors, {"epoch": 3}
    )
    save_weights(weights, tmp_path / "g.oxw")
    loaded = load_weights(tmp_path / "g.oxw")
    assert loaded.manifest == weights.manifest
    assert loaded.metadata == {"epoch": 3}
    for name, value in weights.tensors.items():
        assert np.allclose(loaded.tensors[name], value, rtol=1e-6, atol=1e-7)
    assert encode_oxw(weights.to_container()) == encode_oxw(
        loaded.to_container()
    )


def test_oracle_container_round_trip(tiny_weights, tmp_path):
    x = np.random.default_rng(6).uniform(size=(3, 8, 8))
    trace = {INPUT_NODE: x}
    trace[OUTPUT_NODE] = run_generator(x, tiny_weights, 1, trace)
    oracle = ActivationOracle(tiny_weights.manifest, trace)
    save_oracle(oracle, tmp_path / "oracle.oxw")

    loaded = load_oracle(tmp_path / "oracle.oxw")
    assert np.allclose(loaded.input, x, atol=1e-7)
    assert np.allclose(
        run_generator(loaded.input, tiny_weights, 1), loaded.output, atol=1e-5
    )
    with pytest.raises(ManifestError):
        load_weights(tmp_path / "oracle.oxw")


def test_container_rejects_bad_bytes(tiny_weights):
    raw = encode_oxw(tiny_weights.to_container())
    with pytest.raises(ContainerFormatError):
        decode_oxw(b"PNG" + raw[3:])
    with pytest.raises(ContainerFormatError):
        decode_oxw(raw[:-256])


def test_benchmark_reports_determinism(tiny_weights):
    report = benchmark_inference(tiny_weights, size=32, threads=2, repeats=1)
    assert report.deterministic
    assert report.seconds_per_frame > 0
    with pytest.raises(DimensionMismatchError):
        benchmark_inference(tiny_weights, size=30, threads=2)


@pytest.mark.slow
def test_multithreaded_inference_speeds_up():
    weights = GeneratorWeights.random(build_generator_manifest(), seed=0)
    report = benchmark_inference(weights, size=256, threads=4, repeats=2)
    assert report.deterministic
    assert report.speedup > 1.5

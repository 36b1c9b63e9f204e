"""Tests for the adversarial training loop and the export of its
generator to the inference engine.
"""

# Third-party imports
import numpy as np
import pandas as pd
import pytest

torch = pytest.importorskip("torch")
F = pytest.importorskip("torch.nn.functional")

# Application imports
from oxymap.errors import DimensionMismatchError  # noqa: E402
from oxymap.neural.engine import (  # noqa: E402
    load_oracle,
    load_weights,
    run_generator,
)
from oxymap.neural.manifest import build_generator_manifest  # noqa: E402
from oxymap.phantom.dataset import (  # noqa: E402
    make_dataset,
    make_sample,
    read_manifest,
)
from oxymap.phantom.tensor import checkerboard_parity  # noqa: E402
from oxymap.training.config import (  # noqa: E402
    TrainConfig,
    load_train_config,
)
from oxymap.training.losses import (  # noqa: E402
    ImagePool,
    discriminator_loss,
    generator_adversarial_loss,
    generator_objective,
    l1_loss,
    lr_factor,
)
from oxymap.training.networks import (  # noqa: E402
    FusionGenerator,
    PatchDiscriminator,
)
from oxymap.training.trainer import (  # noqa: E402
    LOG_COLUMNS,
    PatchDataset,
    export_oracle,
    export_weights,
    split_records,
    train,
)


@pytest.fixture(scope="module")
def patches(blob_scene, tmp_path_factory):
    """Six 32 pixel patches from one scene."""
    out_dir = tmp_path_factory.mktemp("patches")
    make_dataset(
        [make_sample(blob_scene, "scene_000")],
        out_dir,
        patch_size=32,
        stride_range=(32, 32),
        augment=False,
    )
    return out_dir


def test_config_defaults_and_overrides(tmp_path):
    config = TrainConfig.from_settings(epochs=None, lambda_l1=10.0)
    assert config.epochs == 50
    assert config.lambda_l1 == 10.0
    assert config.channels == [64, 128, 256, 512]

    (tmp_path / "train.yaml").write_text("epochs: 3\nchannels: [2, 4]\n")
    loaded = load_train_config(tmp_path / "train.yaml")
    assert (loaded.epochs, loaded.channels) == (3, [2, 4])
    with pytest.raises(ValueError):
        TrainConfig(patch_size=8)


def test_learning_rate_schedule():
    assert [lr_factor(e, 4) for e in range(4)] == [1.0, 1.0, 1.0, 0.5]
    assert lr_factor(9, 10) == pytest.approx(0.2)
    assert lr_factor(10, 10) == 0.0


def test_image_pool_fills_then_swaps():
    with pytest.raises(ValueError):
        ImagePool(0)
    pool = ImagePool(2, seed=1)
    pairs = [(torch.full((1,), float(k)), torch.zeros(1)) for k in range(20)]
    first = [pool.query(*p)[0].item() for p in pairs[:2]]
    assert first == [0.0, 1.0] and len(pool) == 2

    returned = [pool.query(*p)[0].item() for p in pairs[2:]]
    assert len(pool) == 2
    assert any(v < k + 2 for k, v in enumerate(returned))
    assert any(v == k + 2 for k, v in enumerate(returned))


def test_losses():
    y = torch.zeros(1, 1, 4, 4)
    y_hat = torch.full((1, 1, 4, 4), 0.5)
    l1 = l1_loss(y, y_hat)
    assert l1.item() == pytest.approx(0.5)
    total = generator_objective(torch.tensor(0.25), l1, 60.0)
    assert total.item() == pytest.approx(30.25)
    with pytest.raises(DimensionMismatchError):
        l1_loss(y, torch.zeros(1, 1, 4, 5))


def test_adversarial_loss_terms():
    torch.manual_seed(0)
    discriminator = PatchDiscriminator(in_channels=4, width=4)
    discriminator.eval()
    x = torch.rand(2, 3, 32, 32)
    y = torch.rand(2, 1, 32, 32) * 2 - 1
    y_hat = torch.rand(2, 1, 32, 32) * 2 - 1
    assert discriminator(x, y).shape == (2, 1, 2, 2)

    loss_d = discriminator_loss(discriminator, x, y, y_hat, 0.9)
    loss_g = generator_adversarial_loss(discriminator, x, y_hat)
    assert loss_d.ndim == 0 and loss_g.ndim == 0
    assert loss_d.item() > 0 and loss_g.item() > 0

    # A buffered pair adds its own fake term to the current one
    pooled = (torch.rand(2, 3, 32, 32), torch.rand(2, 1, 32, 32) * 2 - 1)
    with torch.no_grad():
        extra = F.binary_cross_entropy_with_logits(
            discriminator(*pooled), torch.zeros(2, 1, 2, 2)
        )
        with_pool = discriminator_loss(
            discriminator, x, y, y_hat, 0.9, pooled
        )
    assert with_pool.item() == pytest.approx(loss_d.item() + extra.item())

    # Only the discriminator learns from its loss
    y_hat.requires_grad_(True)
    discriminator_loss(discriminator, x, y, y_hat, 0.9, pooled).backward()
    assert y_hat.grad is None
    generator_adversarial_loss(discriminator, x, y_hat).backward()
    assert y_hat.grad is not None

    with pytest.raises(DimensionMismatchError):
        discriminator_loss(discriminator, x, y, y_hat[..., :16])


def test_patch_dataset_crops_and_scales(patches):
    records = read_manifest(patches)
    dataset = PatchDataset(records, patches, patch_size=16, seed=0)
    assert len(dataset) == 6
    x, y = dataset[0]
    assert tuple(x.shape) == (3, 16, 16)
    assert tuple(y.shape) == (1, 16, 16)
    assert x.dtype == torch.float32
    assert y.min().item() >= -1.0 and y.max().item() <= 1.0

    with pytest.raises(DimensionMismatchError):
        PatchDataset(records, patches, patch_size=64)[0]


@pytest.mark.parametrize("size", [16, 15])
def test_patch_dataset_keeps_checkerboard_phase(monkeypatch, size):
    x = np.zeros((3, 33, 32), dtype=np.float32)
    x[2] = checkerboard_parity((33, 32))
    y = np.zeros((33, 32), dtype=np.float32)
    monkeypatch.setattr(
        "oxymap.training.trainer.load_patch", lambda *args: (x, y)
    )
    records = pd.DataFrame({"scene": ["a"] * 40})
    for flip_prob in (0.0, 0.5, 1.0):
        dataset = PatchDataset(
            records, ".", patch_size=size, flip_prob=flip_prob, seed=3
        )
        for k in range(len(dataset)):
            got, _ = dataset[k]
            assert np.array_equal(
                got[2].numpy() == 1, checkerboard_parity((size, size))
            )


def test_split_holds_out_whole_scenes():
    records = pd.DataFrame({"scene": list("aabbcc"), "row": range(6)})
    train_part, val_part = split_records(records, 0.34, seed=1)
    assert len(val_part["scene"].unique()) == 1
    assert set(train_part["scene"]).isdisjoint(val_part["scene"])
    assert len(train_part) + len(val_part) == 6

    train_part, val_part = split_records(records, 0.0)
    assert len(train_part) == 6 and val_part.empty


def test_exported_generator_matches_engine():
    manifest = build_generator_manifest(channels=[2, 4])
    torch.manual_seed(0)
    generator = FusionGenerator(manifest, init_std=0.3)
    weights = export_weights(generator)

    x = np.random.default_rng(0).uniform(size=(3, 8, 8)).astype(np.float32)
    with torch.no_grad():
        expected = generator(torch.from_numpy(x)[np.newaxis])[0].numpy()
    got = run_generator(x.astype(np.float64), weights, threads=1)
    assert np.allclose(got, expected, atol=1e-4)

    oracle = export_oracle(generator, x)
    assert np.allclose(oracle.output, got, atol=1e-4)
    with pytest.raises(DimensionMismatchError):
        export_oracle(generator, x[:2])


def test_trainer_reproduces_committed_oracle(reference_generator):
    weights, oracle = reference_generator
    generator = FusionGenerator(
        weights.manifest, init_std=None, use_spectral_norm=False
    )
    with torch.no_grad():
        for spec in weights.manifest.layers:
            module = generator.module_for(spec)
            weight, bias = weights.layer(spec)
            module.weight.copy_(torch.from_numpy(weight))
            module.bias.copy_(torch.from_numpy(bias))
    exported = export_oracle(generator, oracle.input)
    for name in weights.manifest.layer_names:
        np.testing.assert_allclose(
            exported.activations[name],
            oracle.activations[name],
            rtol=0,
            atol=1e-5,
        )
    for name, value in export_weights(generator).tensors.items():
        assert np.array_equal(value, weights.tensors[name])


def test_short_training_run_exports_artifacts(patches, tmp_path):
    config = TrainConfig(
        epochs=1,
        batch_size=2,
        buffer_size=4,
        patch_size=32,
        channels=[2, 4],
        val_fraction=0.34,
        flip_prob=0.0,
    )
    result = train(patches, config, out_dir=tmp_path)

    assert result.history.columns.tolist() == LOG_COLUMNS
    assert len(result.history) == 1
    assert np.isfinite(result.history["loss_L1"]).all()
    assert (tmp_path / "generator.oxw").exists()
    assert (tmp_path / "train_log.csv").exists()

    weights = load_weights(tmp_path / "generator.oxw")
    oracle = load_oracle(tmp_path / "oracle.oxw")
    assert weights.metadata["epochs"] == 1
    assert np.allclose(
        run_generator(oracle.input, weights, threads=1),
        oracle.output,
        atol=1e-4,
    )

"""Adversarial training of the fusion generator and export of its
weights and reference activations for the inference engine.
"""

# Standard library imports
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Third-party imports
import numpy as np
import pandas as pd
import torch
from torch.optim import Adam
from torch.optim.lr_scheduler import LambdaLR
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore, IDataStoreFactory
from oxymap.core.raster import Mask, StO2Map, nmae
from oxymap.errors import DimensionMismatchError, ManifestError
from oxymap.neural.engine import (
    ActivationOracle,
    GeneratorWeights,
    save_oracle,
    save_weights,
)
from oxymap.neural.manifest import (
    INPUT_NODE,
    GeneratorManifest,
    build_generator_manifest,
)
from oxymap.phantom.dataset import load_patch, read_manifest
from oxymap.phantom.tensor import in_phase_crop
from oxymap.training.config import TrainConfig
from oxymap.training.losses import (
    ImagePool,
    discriminator_loss,
    generator_adversarial_loss,
    generator_objective,
    l1_loss,
    lr_factor,
)
from oxymap.training.networks import FusionGenerator, PatchDiscriminator

PathLike = Union[Path, str]

LOG_COLUMNS = [
    "epoch",
    "loss_D",
    "loss_G_adv",
    "loss_L1",
    "val_NMAE",
    "seconds",
]

logger = LoggerFactory.get("OXYMAP.TRAINER")


class PatchDataset(Dataset):
    """Serves `(input, target)` pairs from a dataset manifest. Targets
    are mapped from saturation to `[-1, 1]`. Patches larger than the
    training size are cropped, and pairs are mirrored together when
    augmentation is on. Crop offsets are nudged so that pixel `(0, 0)`
    keeps carrying the first wavelength's ratio.
    """

    def __init__(
        self,
        records: pd.DataFrame,
        root: PathLike,
        patch_size: int,
        flip_prob: float = 0.0,
        seed: int = 0,
        store: Optional[IDataStore] = None,
    ) -> None:
        self.records = records.reset_index(drop=True)
        self.root = Path(root)
        self.patch_size = patch_size
        self.flip_prob = flip_prob
        self.store = store
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, k: int) -> Tuple[torch.Tensor, torch.Tensor]:
        x, y = load_patch(self.records.iloc[k], self.root, self.store)
        size = self.patch_size
        if x.shape[1] < size or x.shape[2] < size:
            raise DimensionMismatchError(
                f"A {x.shape[1]}x{x.shape[2]} patch is smaller than the "
                f"{size} pixel training size."
            )

        # Keep the mirrored crop in checkerboard phase
        flip_h = bool(self._rng.random() < self.flip_prob)
        flip_v = bool(self._rng.random() < self.flip_prob)
        r, c, flip_h, flip_v = in_phase_crop(
            x.shape[1:],
            size,
            int(self._rng.integers(0, x.shape[1] - size + 1)),
            int(self._rng.integers(0, x.shape[2] - size + 1)),
            flip_h,
            flip_v,
        )
        x = x[:, r : r + size, c : c + size]
        y = y[r : r + size, c : c + size]
        if flip_h:
            x, y = x[:, :, ::-1], y[:, ::-1]
        if flip_v:
            x, y = x[:, ::-1, :], y[::-1, :]

        x = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
        y = torch.from_numpy(
            np.ascontiguousarray(2.0 * y - 1.0, dtype=np.float32)
        )
        return x, y[np.newaxis]


def split_records(
    records: pd.DataFrame, val_fraction: float, seed: int = 0
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Holds out whole scenes for validation when there are several,
    and individual patches otherwise.
    """
    if val_fraction <= 0 or len(records) < 2:
        return records, records.iloc[0:0]
    rng = np.random.default_rng(seed)
    scenes = sorted(records["scene"].unique())
    if len(scenes) > 1:
        n_val = max(1, int(round(val_fraction * len(scenes))))
        val_scenes = set(rng.permutation(scenes)[:n_val])
        held = records["scene"].isin(val_scenes)
    else:
        n_val = max(1, int(round(val_fraction * len(records))))
        held = np.zeros(len(records), dtype=bool)
        held[rng.permutation(len(records))[:n_val]] = True
    return records[~held], records[held]


def export_weights(
    generator: FusionGenerator, metadata: Optional[Dict] = None
) -> GeneratorWeights:
    """Copies the generator's effective weights, with any spectral
    normalization already applied, into engine form.
    """
    generator.eval()
    tensors = {}
    with torch.no_grad():
        for spec in generator.manifest.layers:
            module = generator.module_for(spec)
            tensors[f"{spec.name}.weight"] = (
                module.weight.detach().cpu().double().numpy()
            )
            tensors[f"{spec.name}.bias"] = (
                module.bias.detach().cpu().double().numpy()
            )
    return GeneratorWeights(generator.manifest, tensors, metadata or {})


def export_oracle(
    generator: FusionGenerator, x: np.ndarray, layers: bool = True
) -> ActivationOracle:
    """Records the generator's activations on a fixed `(C, H, W)`
    input, computed in single precision from the single-precision
    input the oracle stores.

    Raises:
        `DimensionMismatchError` if the input shape is not accepted.

    Args:
        generator (`FusionGenerator`): The generator.

        x (`np.ndarray`): The input.

        layers (`bool`): Whether to keep every layer output or only the
            final output.

    Returns:
        (`ActivationOracle`): The oracle.
    """
    manifest = generator.manifest
    x32 = np.asarray(x, dtype=np.float32)
    if x32.ndim != 3 or x32.shape[0] != manifest.in_channels:
        raise DimensionMismatchError(
            f"Expected an oracle input of shape ({manifest.in_channels}, "
            f"H, W), received {x32.shape}."
        )
    generator.eval()
    device = next(generator.parameters()).device
    trace: Dict[str, torch.Tensor] = {}
    with torch.no_grad():
        out = generator(
            torch.from_numpy(x32)[np.newaxis].to(device),
            trace if layers else None,
        )
    activations = {INPUT_NODE: x32.astype(np.float64)}
    for name, value in trace.items():
        activations[name] = value[0].cpu().double().numpy()
    activations["output"] = out[0].cpu().double().numpy()
    return ActivationOracle(manifest, activations)


@dataclass
class TrainResult:
    """The artifacts of a training run."""

    weights: GeneratorWeights
    oracle: ActivationOracle
    history: pd.DataFrame
    weights_path: Optional[Path] = None
    oracle_path: Optional[Path] = None
    log_path: Optional[Path] = None


def _validate(
    generator: FusionGenerator, loader: DataLoader, device: torch.device
) -> float:
    """Scores the generator on held-out pairs by NMAE over all pixels."""
    preds: List[np.ndarray] = []
    truths: List[np.ndarray] = []
    generator.eval()
    with torch.no_grad():
        for x, y in loader:
            y_hat = generator(x.to(device)).cpu().double().numpy()
            preds += [p[0] for p in np.clip((y_hat + 1.0) / 2.0, 0.0, 1.0)]
            truths += [t[0] for t in (y.double().numpy() + 1.0) / 2.0]
    generator.train()
    if not preds:
        return float("nan")
    pred = StO2Map.from_array(np.concatenate(preds))
    truth = StO2Map.from_array(np.clip(np.concatenate(truths), 0.0, 1.0))
    return nmae(pred, truth, Mask.full(*truth.shape))


def train(
    manifest_path: PathLike,
    config: TrainConfig,
    out_dir: Optional[PathLike] = None,
    architecture: Optional[GeneratorManifest] = None,
    store: Optional[IDataStore] = None,
) -> TrainResult:
    """Trains a generator and discriminator by alternating updates,
    then exports the generator, its oracle for one fixed validation
    input and the per-epoch log.

    Raises:
        `ManifestError` if the dataset is empty or its channel count
            does not match the architecture.

    Args:
        manifest_path (`pathlib.Path` | `str`): The dataset manifest or
            its directory.

        config (`TrainConfig`): The hyperparameters.

        out_dir (`pathlib.Path` | `str`): Receives `generator.oxw`,
            `oracle.oxw` and `train_log.csv` when given.

        architecture (`GeneratorManifest`): The generator graph.
            Defaults to the canonical graph at the config's channels.

        store (`IDataStore`): The data store.

    Returns:
        (`TrainResult`): The exported artifacts.
    """
    # Seed every source of randomness
    torch.manual_seed(config.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    device = torch.device(config.device)
    store = store or IDataStoreFactory.get()

    # Load the dataset
    manifest_path = Path(manifest_path)
    root = manifest_path if manifest_path.suffix != ".jsonl" else (
        manifest_path.parent
    )
    records = read_manifest(manifest_path, store)
    if records.empty:
        raise ManifestError(f'The dataset at "{root}" holds no patches.')
    train_records, val_records = split_records(
        records, config.val_fraction, config.seed
    )
    train_set = PatchDataset(
        train_records, root, config.patch_size, config.flip_prob,
        config.seed, store,
    )
    val_set = PatchDataset(
        val_records, root, config.patch_size, 0.0, config.seed, store
    )
    loader = DataLoader(
        train_set,
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(config.seed),
    )
    val_loader = DataLoader(val_set, batch_size=1)

    # Build the networks
    architecture = architecture or build_generator_manifest(config.channels)
    x0, _ = train_set[0]
    if x0.shape[0] != architecture.in_channels:
        raise ManifestError(
            f"The dataset supplies {x0.shape[0]} input channel(s); the "
            f"generator expects {architecture.in_channels}."
        )
    generator = FusionGenerator(
        architecture, config.init_std, config.spectral_norm
    ).to(device)
    discriminator = PatchDiscriminator(
        architecture.in_channels + architecture.out_channels,
        init_std=config.init_std,
        use_spectral_norm=config.spectral_norm,
    ).to(device)
    opt_g = Adam(generator.parameters(), lr=config.lr, betas=config.betas)
    opt_d = Adam(discriminator.parameters(), lr=config.lr, betas=config.betas)
    sched_g = LambdaLR(opt_g, lambda e: lr_factor(e, config.epochs))
    sched_d = LambdaLR(opt_d, lambda e: lr_factor(e, config.epochs))
    pool = ImagePool(config.buffer_size, config.seed)

    # Alternate discriminator and generator updates
    rows = []
    logger.info(
        f"Training on {len(train_set)} patch(es) for {config.epochs} "
        f"epoch(s); {len(val_set)} held out."
    )
    for epoch in tqdm(range(config.epochs), desc="Training"):
        start = time.perf_counter()
        sums = np.zeros(3)
        for x, y in loader:
            x, y = x.to(device), y.to(device)
            y_hat = generator(x)

            # Discriminator step
            loss_d = torch.zeros((), device=device)
            if config.adversarial:
                pooled = pool.query(x, y_hat)
                opt_d.zero_grad()
                loss_d = discriminator_loss(
                    discriminator, x, y, y_hat, config.real_label, pooled
                )
                loss_d.backward()
                opt_d.step()

            # Generator step
            opt_g.zero_grad()
            loss_l1 = l1_loss(y, y_hat)
            loss_g_adv = torch.zeros((), device=device)
            if config.adversarial:
                loss_g_adv = generator_adversarial_loss(
                    discriminator, x, y_hat
                )
            generator_objective(
                loss_g_adv, loss_l1, config.lambda_l1
            ).backward()
            opt_g.step()
            sums += [loss_d.item(), loss_g_adv.item(), loss_l1.item()]

        sched_g.step()
        sched_d.step()
        means = sums / max(1, len(loader))
        rows.append(
            {
                "epoch": epoch + 1,
                "loss_D": means[0],
                "loss_G_adv": means[1],
                "loss_L1": means[2],
                "val_NMAE": _validate(generator, val_loader, device),
                "seconds": time.perf_counter() - start,
            }
        )
        logger.info(
            f"Epoch {epoch + 1}: L1 {means[2]:.4f}, "
            f"val NMAE {rows[-1]['val_NMAE']:.4f}."
        )
    history = pd.DataFrame.from_records(rows, columns=LOG_COLUMNS)

    # Export
    fixed = val_set if len(val_set) else train_set
    x_fixed = fixed[0][0].numpy()
    weights = export_weights(
        generator, {"epochs": config.epochs, "seed": config.seed}
    )
    oracle = export_oracle(generator, x_fixed)
    result = TrainResult(weights=weights, oracle=oracle, history=history)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.weights_path = save_weights(
            weights, out_dir / "generator.oxw", store
        )
        result.oracle_path = save_oracle(
            oracle, out_dir / "oracle.oxw", store
        )
        with store.open_file(out_dir / "train_log.csv", "w") as f:
            history.to_csv(f, index=False)
        result.log_path = store.resolve(out_dir / "train_log.csv")
        logger.info(f"Exported generator and oracle to {out_dir}.")
    return result

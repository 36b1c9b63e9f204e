"""Training hyperparameters.
"""

# Standard library imports
import json
from pathlib import Path
from typing import List, Optional, Tuple, Union

# Third-party imports
import yaml
from django.conf import settings
from pydantic import BaseModel, Field

# Application imports
from common.storage import IDataStore, IDataStoreFactory

PathLike = Union[Path, str]


class TrainConfig(BaseModel):
    """Hyperparameters of one adversarial training run."""

    lambda_l1: float = Field(default=60.0, gt=0)
    """The weight of the L1 term in the generator objective.
    """

    lr: float = Field(default=0.0002, gt=0)
    betas: Tuple[float, float] = (0.5, 0.999)
    epochs: int = Field(default=200, ge=1)
    """Training epochs. The rate is constant for the first half and
    decays linearly to zero over the second.
    """

    batch_size: int = Field(default=1, ge=1)
    buffer_size: int = Field(default=64, ge=1)
    """The number of generated pairs kept for discriminator updates.
    """

    real_label: float = Field(default=0.9, gt=0, le=1)
    """The smoothed discriminator target for real pairs.
    """

    flip_prob: float = Field(default=0.5, ge=0, le=1)
    """The chance of mirroring a pair along each axis.
    """

    patch_size: int = Field(default=256, ge=16)
    init_std: float = Field(default=0.02, gt=0)
    channels: List[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    spectral_norm: bool = True
    adversarial: bool = True
    """Whether the adversarial term is trained. Disabling it reduces
    training to L1 regression.
    """

    val_fraction: float = Field(default=0.1, ge=0, lt=1)
    device: str = "cpu"
    seed: int = 0

    @classmethod
    def from_settings(cls, **overrides) -> "TrainConfig":
        """Creates a config from the configured defaults."""
        params = {
            "lambda_l1": settings.TRAIN_LAMBDA_L1,
            "lr": settings.TRAIN_LR,
            "betas": tuple(settings.TRAIN_BETAS),
            "epochs": settings.TRAIN_EPOCHS,
            "batch_size": settings.TRAIN_BATCH_SIZE,
            "buffer_size": settings.TRAIN_BUFFER_SIZE,
            "real_label": settings.TRAIN_REAL_LABEL,
            "flip_prob": settings.DATASET_FLIP_PROB,
            "patch_size": settings.TRAIN_PATCH_SIZE,
            "init_std": settings.TRAIN_INIT_STD,
            "channels": list(settings.GENERATOR_CHANNELS),
        }
        params.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**params)


def load_train_config(
    fpath: Optional[PathLike] = None, store: Optional[IDataStore] = None
) -> TrainConfig:
    """Reads a YAML or JSON config over the configured defaults."""
    if fpath is None:
        return TrainConfig.from_settings()
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "r") as f:
        if Path(fpath).suffix == ".json":
            doc = json.load(f)
        else:
            doc = yaml.safe_load(f)
    return TrainConfig.from_settings(**(doc or {}))

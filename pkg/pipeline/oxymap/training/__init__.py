"""Adversarial training of the fusion generator. Requires torch."""

from oxymap.training.config import TrainConfig, load_train_config
from oxymap.training.losses import (
    ImagePool,
    discriminator_loss,
    generator_adversarial_loss,
    generator_objective,
    l1_loss,
    lr_factor,
)
from oxymap.training.networks import (
    FusionGenerator,
    PatchDiscriminator,
    init_weights,
)
from oxymap.training.trainer import (
    PatchDataset,
    TrainResult,
    export_oracle,
    export_weights,
    split_records,
    train,
)

"""Settings to use when running the full training schedule.
"""

# Standard library imports
import os

# Application imports
from config.settings.base import BaseConfig


class ProductionConfig(BaseConfig):
    """Defines configuration settings for full-scale runs on an accelerator."""

    # General
    DEBUG = False

    # Full schedule: 200 epochs, constant rate for the first half
    TRAIN_EPOCHS = 200
    TRAIN_PATCH_SIZE = 256

    # Persist artifacts to a mounted volume when one is provided
    DATA_DIR = BaseConfig.DATA_DIR
    if os.getenv("OXYMAP_ARTIFACT_VOLUME", None):
        DATA_DIR = BaseConfig.BASE_DIR / os.environ["OXYMAP_ARTIFACT_VOLUME"]

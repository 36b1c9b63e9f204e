"""Settings to use when running the pipeline on a workstation or in CI.
"""

# Application imports
from config.settings.base import BaseConfig


class LocalConfig(BaseConfig):
    """Defines configuration settings for desk-scale runs.

    Training uses a shortened schedule and smaller patches so that the
    synthetic reproduction finishes on a single machine.
    """

    # General
    DEBUG = True

    # Desk-scale training schedule
    TRAIN_EPOCHS = 50
    TRAIN_PATCH_SIZE = 128

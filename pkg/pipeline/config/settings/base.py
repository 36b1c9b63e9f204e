"""Base settings used throughout the Django project.
"""

# Standard library imports
import os
from pathlib import Path

# Third-party imports
from configurations import Configuration


def _env_flag(name: str, default: str = "no") -> bool:
    """Parses a yes/no style environment variable."""
    value = os.getenv(name, default).strip().lower()
    return value in ("1", "y", "yes", "true", "on")


class BaseConfig(Configuration):
    """Defines configuration settings common across environments."""

    # Base directories
    BASE_DIR = Path(__file__).parents[3]
    PROJECT_DIR = BASE_DIR / "pipeline"
    DATA_DIR = Path(os.getenv("OXYMAP_DATA_DIR", BASE_DIR / "data"))
    FIXTURES_DIR = BASE_DIR / "data" / "fixtures"

    # Fixture file paths
    HEMOGLOBIN_BASIS_FPATH = FIXTURES_DIR / "hemoglobin_extinction.json"
    REFERENCE_GENERATOR_DIR = FIXTURES_DIR / "generator"

    # Installed apps
    INSTALLED_APPS = (
        # Your apps
        "common",
        "oxymap",
    )

    # The pipeline is file based and never touches a database
    DATABASES = {}
    SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "oxymap-local")

    # General
    LANGUAGE_CODE = "en-us"
    TIME_ZONE = "UTC"
    USE_I18N = False
    USE_TZ = True

    # Set DEBUG to False as a default for safety
    DEBUG = _env_flag("DJANGO_DEBUG")

    # Logging level used by `common.logger.LoggerFactory`
    LOG_LEVEL = os.getenv("OXYMAP_LOG_LEVEL", "INFO")

    # Worker threads for per-pixel maps, frame series and the CNN engine
    WORKERS = int(os.getenv("OXYMAP_WORKERS", os.cpu_count() or 1))

    # Forward model
    FORWARD_MODEL = "diffusion"
    REFRACTIVE_INDEX = 1.4
    FX_DC = 0.0
    FX_AC = 0.2

    # Default lookup table grid (log-spaced, mm^-1)
    LUT_MUA_RANGE = (0.001, 0.5)
    LUT_MUSP_RANGE = (0.1, 5.0)
    LUT_GRID_SIZES = (256, 256)

    # Conventional SFDI
    SFDI_WAVELENGTHS_NM = (659, 691, 731, 851)

    # Single snapshot demodulation windows (fractions of the carrier)
    SSOP_LOWPASS_CUTOFF = 0.5
    SSOP_HIGHPASS_HALFWIDTH = 0.5
    SSOP_BORDER_PX = 16
    SSOP_MIN_PERIODS = 8

    # Snapshot (network input) wavelengths
    SNAPSHOT_WAVELENGTHS_NM = (659, 851)

    # Synthetic phantoms and datasets
    PHANTOM_SHAPE = (520, 696)
    PHANTOM_PITCH_MM = 0.3125
    PHANTOM_STO2_RANGE = (0.3, 1.0)
    PHANTOM_THB_RANGE = (0.03, 0.08)
    PHANTOM_MUSP_RANGE = (0.8, 1.6)
    REFERENCE_MUA = 0.01
    REFERENCE_MUSP = 1.0
    INPUT_SIZE_MULTIPLE = 16
    DATASET_PATCH_SIZE = 256
    DATASET_STRIDE_RANGE = (64, 72)
    DATASET_FLIP_PROB = 0.5

    # Inference engine
    ENGINE_WORKERS = WORKERS
    ENGINE_BAND_ROWS = 32

    # Pixels per non-negative least squares work unit
    FIT_BAND_PIXELS = 4096
    GENERATOR_CHANNELS = (64, 128, 256, 512)
    GENERATOR_LEAKY_SLOPE = 0.2

    # Training (desk-scale values are overridden per environment)
    TRAIN_EPOCHS = 50
    TRAIN_PATCH_SIZE = 128
    TRAIN_LAMBDA_L1 = 60.0
    TRAIN_LR = 0.0002
    TRAIN_BETAS = (0.5, 0.999)
    TRAIN_BATCH_SIZE = 1
    TRAIN_BUFFER_SIZE = 64
    TRAIN_REAL_LABEL = 0.9
    TRAIN_INIT_STD = 0.02

    # Logging
    LOGGING = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "verbose": {
                "format": (
                    "%(levelname)s %(asctime)s %(module)s %(process)d"
                    " %(thread)d %(message)s"
                )
            },
            "simple": {"format": "%(levelname)s %(message)s"},
        },
        "handlers": {
            "console": {
                "level": "DEBUG",
                "class": "logging.StreamHandler",
                "formatter": "simple",
            },
        },
        "loggers": {
            "django": {
                "handlers": ["console"],
                "level": "WARNING",
                "propagate": True,
            },
            "oxymap": {
                "handlers": ["console"],
                "level": "INFO",
                "propagate": False,
            },
        },
    }

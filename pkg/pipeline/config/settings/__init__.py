from .local import LocalConfig  # noqa: F401
from .production import ProductionConfig  # noqa: F401

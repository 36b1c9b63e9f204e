"""Provides customized loggers for use across the application.
"""

# Standard library imports
import logging
from typing import Optional, Union

# Third-party imports
from django.conf import settings


class LoggerFactory:
    """A simple factory for configuring standard loggers."""

    FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    """The record format shared by every console handler.
    """

    @staticmethod
    def get(
        name: str, level: Optional[Union[int, str]] = None
    ) -> logging.Logger:
        """Fetches the logger with the given name, attaching a stream
        handler the first time it is requested. Subsequent calls reuse
        the existing handler so that records are never duplicated when
        several commands or workers share a logger.

        Args:
            name (`str`): The logger name.

            level (`int` | `str`): The initial level. Defaults to
                the `LOG_LEVEL` configured in the Django settings,
                or "INFO" when settings are unavailable.

        Returns:
            (`logging.Logger`): The logger.
        """
        # Resolve level
        if level is None:
            level = getattr(settings, "LOG_LEVEL", logging.INFO)

        # Create logger and set level
        logger = logging.getLogger(name)
        logger.setLevel(level)

        # Attach console handler only once
        if not any(
            getattr(h, "_oxymap_console", False) for h in logger.handlers
        ):
            ch = logging.StreamHandler()
            ch.setFormatter(logging.Formatter(LoggerFactory.FORMAT))
            ch._oxymap_console = True
            logger.addHandler(ch)
            logger.propagate = False

        return logger

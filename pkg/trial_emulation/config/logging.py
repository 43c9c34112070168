"""
Logging setup for Trial Emulation v1.0

Library modules only ever call ``logging.getLogger(__name__)``; the CLI
calls ``configure_logging`` once at start-up.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from .settings import Settings, get_settings

PACKAGE_LOGGER = "trial_emulation"
TEXT_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"
JSON_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(settings: Optional[Settings] = None) -> logging.Logger:
    """
    Install a single stderr handler on the package logger.

    Args:
        settings: Settings to read LOG_LEVEL / LOG_FORMAT from

    Returns:
        The configured package logger
    """
    settings = settings or get_settings()
    logger = logging.getLogger(PACKAGE_LOGGER)

    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    if settings.LOG_FORMAT.lower() == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    logger.addHandler(handler)
    logger.setLevel(settings.LOG_LEVEL.upper())
    logger.propagate = False
    return logger

"""Logging setup for the command line; library modules only create loggers."""

from __future__ import annotations

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_VERBOSITY = {0: logging.WARNING, 1: logging.INFO}


def configure_logging(verbosity: int = 0) -> logging.Logger:
    """Attach a single stream handler to the package logger."""
    root = logging.getLogger("capcycle")
    root.setLevel(_VERBOSITY.get(verbosity, logging.DEBUG))
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False
    return root


def progress_disabled(logger: logging.Logger) -> bool:
    """Progress bars follow the logger: shown only at INFO or below."""
    return not logger.isEnabledFor(logging.INFO)

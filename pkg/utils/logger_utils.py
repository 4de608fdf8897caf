"""
Loggers hang off one `dirforge` parent that owns the only handler.
Records go to whatever sys.stderr is at emit time; stdout carries
command output.
"""

import logging
import sys

from core.config import settings

ROOT_LOGGER = "dirforge"
LOG_FORMAT = "[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s"


class StderrHandler(logging.StreamHandler):
    def __init__(self):
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _):
        pass


def _root_logger() -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER)
    # Prevent duplicate handlers
    if not root.handlers:
        handler = StderrHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        root.propagate = False
    root.setLevel(settings.LOG_LEVEL.upper())
    return root


def get_logger(name: str) -> logging.Logger:
    """`get_logger(__name__)` in services.metric_services logs as dirforge.services.metric_services."""
    _root_logger()
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")

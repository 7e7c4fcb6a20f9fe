"""Logging configuration for command-line entry points.

Library modules only call `logging.getLogger(__name__)`; handlers are
installed here, once, by the CLI.
"""
from __future__ import annotations

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | int = "INFO") -> None:
    """Install a single stream handler on the `src` logger tree."""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger("src")
    root.setLevel(level)
    if not any(getattr(h, "_mcwf_handler", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._mcwf_handler = True  # type: ignore[attr-defined]
        root.addHandler(handler)


__all__ = ["configure_logging", "LOG_FORMAT"]

"""Process-level settings and logging setup."""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Literal

import structlog
from pydantic_settings import BaseSettings, SettingsConfigDict


class MatregSettings(BaseSettings):
    """Environment-driven defaults, overridable from the command line.

    Every field can be set with a ``MATREG_`` prefixed variable, e.g.
    ``MATREG_WORKERS=4`` or ``MATREG_LOG_JSON=true``.
    """

    model_config = SettingsConfigDict(env_prefix="MATREG_", env_file=".env", extra="ignore")

    outdir: Path = Path("results")
    workers: int = 1
    log_level: Literal["debug", "info", "warning", "error"] = "info"
    log_json: bool = False


def configure_logging(level: str = "info", json: bool = False) -> None:
    """Route structlog through the stdlib logger at ``level``."""
    numeric = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=numeric, force=True)

    renderer: structlog.types.Processor
    if json:
        renderer = structlog.processors.JSONRenderer()
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

import logging
import sys
from typing import Optional

import structlog

from .settings import Settings, settings as default_settings

_configured = False


def configure_logging(config: Optional[Settings] = None, force: bool = False) -> None:
    """
    Configure structlog once for the process.

    Args:
        config: Settings to read the level and format from (default: singleton)
        force: Reconfigure even if already configured
    """
    global _configured
    if _configured and not force:
        return

    options = (config or default_settings).get_logging_config()
    level = getattr(logging, options["level"], logging.INFO)

    renderer = (
        structlog.processors.JSONRenderer()
        if options["json"]
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        # sys.stderr is looked up on every call
        logger_factory=lambda *args: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
    _configured = True

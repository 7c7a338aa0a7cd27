import logging
import sys

from core.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def configure_logging(level: str = "INFO") -> None:
    """Send log records to stderr; stdout is reserved for command output."""
    name = level.upper()
    if name not in LOG_LEVELS:
        raise ConfigError(f"unknown log level '{level}' (choose from {', '.join(LOG_LEVELS)})")
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(name)

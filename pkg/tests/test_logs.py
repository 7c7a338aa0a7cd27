import logging
import sys

import pytest

from core.errors import ConfigError
from core.logs import configure_logging


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_level_is_case_insensitive():
    configure_logging("debug")
    root = logging.getLogger()
    assert root.level == logging.DEBUG
    assert len(root.handlers) == 1
    assert root.handlers[0].stream is sys.stderr


def test_unknown_level_is_config_error():
    with pytest.raises(ConfigError, match="unknown log level 'loud'"):
        configure_logging("loud")

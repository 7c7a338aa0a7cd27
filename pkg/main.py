"""
mkcaps command-line entry point.

    python main.py <command> [flags]

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

import argparse
import logging
import sys

from commands import ablation, baseline, crossval, evaluate, synth, trace, train
from core.config import settings
from core.errors import MKCapsError, UsageError
from core.logs import LOG_LEVELS, configure_logging

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="mkcaps",
        description="Multi-kernel capsule network for functional-connectivity classification",
    )
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default=None,
                        help="logging level (default MKCAPS_LOG_LEVEL or INFO)")
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)

    for command in (synth, train, evaluate, crossval, trace, baseline, ablation):
        command.register(subparsers)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:          # --help
        return int(e.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 1

    try:
        configure_logging(args.log_level or settings.log_level)
        logger.info("mkcaps %s", args.command)
        return args.handler(args)
    except MKCapsError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))

"""
TowerPlan - Command Line Application
Entry point wiring scenario files to fields, placement, evaluation,
comparison, baselines, verification and raster export.
"""

import argparse
import logging
import sys
from typing import List, Optional

from towerplan import __version__
from towerplan.commands import baseline, build_fields, compare, evaluate, export, place, verify
from towerplan.commands.common import options_parser
from towerplan.config import settings
from towerplan.errors import TowerPlanError

logger = logging.getLogger("towerplan")

COMMANDS = (build_fields, place, evaluate, compare, baseline, verify, export)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towerplan",
        description="Transmitter placement by interference-aware submodular greedy selection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parent = options_parser()
    for command in COMMANDS:
        command.register(subparsers, parent)
    return parser


def configure_logging(level: Optional[str]) -> None:
    """Root logger to stderr; stdout and artifacts stay free of log lines."""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    configure_logging(getattr(args, "log_level", None))
    try:
        return int(args.handler(args) or 0)
    except TowerPlanError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unhandled error in '{args.command}'")
        print(f"error[internal]: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

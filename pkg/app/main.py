"""
Command-line entry point: ``python -m app.main <subcommand>``.
"""

import sys
from typing import List, Optional

import structlog

from app.cli.commands import command_router
from app.cli.common import add_common_arguments
from app.core.config import settings
from app.core.logging import setup_logging

logger = structlog.get_logger(__name__)


def build_parser():
    return command_router.build_parser(
        prog="guided",
        description=f"{settings.APP_NAME} {settings.APP_VERSION}: fine-grained open-vocabulary detection",
        common=add_common_arguments,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch one subcommand and return its exit status."""
    setup_logging()
    args = build_parser().parse_args(argv)
    logger.info("Command started", command=args.command, version=settings.APP_VERSION)
    status = args.handler(args)
    logger.info("Command finished", command=args.command, exit_code=status)
    return status


if __name__ == "__main__":
    sys.exit(main())

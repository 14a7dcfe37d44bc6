"""
TKGE
Temporal knowledge-graph embeddings: training, filtered evaluation and skill-demand forecasting
"""
import argparse
import logging
import sys
from typing import List, Optional

import torch
from pydantic import ValidationError

from .commands import COMMAND_MODULES
from .commands.common import UsageError
from .config import get_settings
from .errors import TKGError


logger = logging.getLogger("app")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tkge",
        description="Train, evaluate and query temporal knowledge-graph embedding models.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def configure_runtime(args: argparse.Namespace) -> None:
    settings = get_settings()
    level = (getattr(args, "log_level", None) or settings.log_level).upper()
    logging.basicConfig(level=level, format=settings.log_format, stream=sys.stderr, force=True)
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        raise UsageError("--threads must be >= 1")
    torch.set_num_threads(threads or settings.worker_count)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns 0 on success, 1 on a runtime failure, 2 on a usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        configure_runtime(args)
        return args.handler(args)
    except (UsageError, ValidationError) as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return 2
    except TKGError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

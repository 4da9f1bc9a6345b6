import argparse
import sys
from typing import List, Optional
import logging

from app.core.config import settings
from app.commands import codes, references, synthesis, tasks
from app.commands.common import emit
from app.middleware.error_handler import EXIT_OK, handle_exception

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app.main",
        description=f"{settings.PROJECT_NAME} {settings.VERSION}",
    )
    parser.add_argument("--config", help="key = value file with synthesis parameters")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include command groups
    codes.register(subparsers)
    tasks.register(subparsers)
    synthesis.register(subparsers)
    references.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.debug(f"Running command {args.command}")
    try:
        emit(args.handler(args))
    except Exception as exc:
        return handle_exception(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

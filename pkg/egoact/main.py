"""Command-line entry point"""

import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from egoact.cli.commands import build_parser
from egoact.config import settings
from egoact.core.exceptions import ConfigurationError, EgoActError, UsageError

logger = logging.getLogger("egoact")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


def configure_logging(debug: bool = False) -> None:
    if debug or settings.DEBUG:
        level = logging.DEBUG
    else:
        level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and map failures to exit codes"""
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.debug:
            configure_logging(debug=True)
        logger.debug(f"Running {args.command}")
        return args.handler(args)
    except (UsageError, ConfigurationError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except EgoActError as e:
        logger.error(str(e))
        return EXIT_DATA
    except Exception:
        logger.exception("Internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

import asyncio
import logging
import sys

from recordwalk.core.config import get_settings
from recordwalk.interface.cli import LOG_FORMAT, main


if __name__ == "__main__":
    logging.basicConfig(
        level=get_settings().log_level,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nApplication interrupted by user. Exiting...", file=sys.stderr)
        sys.exit(130)

"""Main entry point for the Granular Stereo CLI."""

import logging
import os
import sys
import traceback

from dotenv import load_dotenv

from granular_stereo.cli import parse_args, run_from_args
from granular_stereo.errors import StereoError
from granular_stereo.logging_setup import setup_logging


def _one_line(message: str) -> str:
    return " ".join(str(message).split())


def run(argv=None):
    """
    Main entry point for the granular-stereo command.

    Sets up logging, parses CLI arguments and runs the chosen command.
    StereoError subclasses exit with their ``exit_code`` after a single-line
    diagnostic on stderr. Shows a full traceback only if DEBUG is set.
    """
    # .env in the working directory; variables already set take precedence
    load_dotenv()

    logger = setup_logging()
    logger.debug("Granular Stereo starting...")

    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        run_from_args(args)
    except StereoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {_one_line(e)}", file=sys.stderr)
        sys.exit(e.exit_code)
    except KeyboardInterrupt:
        print("Interrupted.", file=sys.stderr)
        sys.exit(130)
    except Exception as e:
        if os.getenv("DEBUG", "").lower() in ("1", "true", "yes"):
            logger.exception("Unexpected error occurred:")
            traceback.print_exc()
        else:
            logger.info("Set DEBUG=1 environment variable to see full traceback.")
        print(f"Unexpected error: {_one_line(e)}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    run()

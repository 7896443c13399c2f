import argparse
import logging
import sys
from collections.abc import Sequence

from .commands import baseline, cv, evaluate, gradcheck, predict, stats, synth, train
from .errors import (
    ConfigError,
    DataFormatError,
    NumericalError,
    UsageError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

COMMANDS = (train, predict, evaluate, cv, synth, gradcheck, baseline, stats)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def create_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="certcoder",
        description="Code death-certificate lines with ICD-10 using a dictionary-primed LSTM.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug events")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    subparsers = parser.add_subparsers(
        dest="command", required=True, metavar="command", parser_class=_Parser
    )
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _fail(code: int, exc: BaseException) -> int:
    print(f"certcoder: error: {exc}", file=sys.stderr)
    logger.debug("event=command_failed exit_code=%s", code, exc_info=exc)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:
        return int(exc.code or 0)

    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except (UsageError, ConfigError) as exc:
        return _fail(EXIT_USAGE, exc)
    except (DataFormatError, OSError, ValueError) as exc:
        return _fail(EXIT_DATA, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)


def run() -> None:
    sys.exit(main())

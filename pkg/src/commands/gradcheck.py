import argparse
from pathlib import Path

from ..errors import NumericalError, UsageError
from ..services.formatting import format_gradcheck_table
from ..services.gradcheck import GradCheckSizes, run_gradcheck_suite
from .common import RunRecorder, add_config_arguments, emit, resolve_settings, write_report


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("gradcheck", help="finite-difference checks of every backward pass")
    parser.add_argument(
        "--sizes",
        default="",
        help="comma-separated overrides such as enc_hidden=3,dec_hidden=4,steps=3",
    )
    parser.add_argument("--seeds", type=int, default=20, help="random draws per check")
    parser.add_argument("--report-file", type=Path)
    add_config_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    try:
        sizes = GradCheckSizes.parse(args.sizes)
    except ValueError as exc:
        raise UsageError(f"--sizes: {exc}") from exc
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    settings, seed = resolve_settings(args)

    results = run_gradcheck_suite(seeds=args.seeds, sizes=sizes, seed=seed)
    emit(format_gradcheck_table(results))

    if args.report_file is not None:
        write_report(
            args.report_file,
            {
                "seed": seed,
                "checks": [
                    {
                        "name": result.name,
                        "error": result.error,
                        "tolerance": result.tolerance,
                        "passed": result.passed,
                    }
                    for result in results
                ],
            },
        )
        recorder = RunRecorder("gradcheck", settings, seed, config_path=args.config)
        recorder.wrote(args.report_file)
        recorder.finish_next_to(args.report_file)

    failed = [result.name for result in results if not result.passed]
    if failed:
        raise NumericalError(f"Gradient checks failed: {', '.join(failed)}")
    return 0

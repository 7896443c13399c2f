import argparse
from pathlib import Path

from ..gateways.corpus_file import load_corpus, write_predictions
from ..gateways.dictionary_file import load_dictionary
from ..services.evaluation import dictionary_baseline, score
from ..services.formatting import format_metrics_table
from ..services.prior import build_code_documents, fit_tfidf
from .common import RunRecorder, add_config_arguments, emit, resolve_settings, write_report


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "baseline", help="code each comma/slash fragment with its closest dictionary entry"
    )
    parser.add_argument("--dict", dest="dictionary", type=Path, required=True)
    parser.add_argument("--corpus", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="predictions file")
    parser.add_argument("--report-file", type=Path)
    add_config_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    settings, seed = resolve_settings(args)
    index = fit_tfidf(build_code_documents(load_dictionary(args.dictionary)))
    records = load_corpus(args.corpus)
    predictions = dictionary_baseline(index, records)
    write_predictions(predictions, records, args.out)

    report = score(predictions, records)
    emit(format_metrics_table(report, label=f"baseline {args.corpus.name}"))
    write_report(args.report_file, report.as_dict())

    recorder = RunRecorder("baseline", settings, seed, config_path=args.config)
    recorder.read(args.dictionary, args.corpus)
    recorder.wrote(args.out, *([args.report_file] if args.report_file else []))
    recorder.finish_next_to(args.out)
    return 0

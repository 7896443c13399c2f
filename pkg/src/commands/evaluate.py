import argparse
from pathlib import Path

from ..gateways.corpus_file import load_corpus
from ..models import Prediction
from ..services.evaluation import score
from ..services.formatting import format_metrics_table
from .common import RunRecorder, add_config_arguments, emit, resolve_settings, write_report


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("evaluate", help="score a predictions file against gold")
    parser.add_argument("--pred", type=Path, required=True, help="predictions in corpus format")
    parser.add_argument("--gold", type=Path, required=True, help="gold corpus")
    parser.add_argument("--report-file", type=Path, help="also write the metrics as JSON")
    add_config_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    predictions = [
        Prediction(doc_id=record.doc_id, line_id=record.line_id, codes=record.gold_codes)
        for record in load_corpus(args.pred)
    ]
    report = score(predictions, load_corpus(args.gold))
    emit(format_metrics_table(report, label=args.gold.name))

    if args.report_file is not None:
        settings, seed = resolve_settings(args)
        write_report(args.report_file, report.as_dict())
        recorder = RunRecorder("evaluate", settings, seed, config_path=args.config)
        recorder.read(args.pred, args.gold)
        recorder.wrote(args.report_file)
        recorder.finish_next_to(args.report_file)
    return 0

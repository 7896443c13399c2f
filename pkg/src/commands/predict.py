import argparse
from pathlib import Path

from ..gateways.checkpoint_store import load_checkpoint
from ..gateways.corpus_file import load_corpus, write_predictions
from ..services.evaluation import predict_corpus
from .common import RunRecorder, add_config_arguments, emit, resolve_settings


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("predict", help="code every line of a corpus with a checkpoint")
    parser.add_argument("--model", type=Path, required=True, help="checkpoint path")
    parser.add_argument("--corpus", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="predictions file")
    add_config_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    settings, seed = resolve_settings(args)
    model = load_checkpoint(args.model)
    records = load_corpus(args.corpus)
    predictions = predict_corpus(model, records)
    write_predictions(predictions, records, args.out)

    recorder = RunRecorder("predict", settings, seed, config_path=args.config)
    recorder.read(args.model, args.corpus)
    recorder.wrote(args.out)
    recorder.extra["lines"] = len(predictions)
    recorder.extra["model_config"] = model.config.model_dump(mode="json")
    recorder.finish_next_to(args.out)

    coded = sum(1 for prediction in predictions if prediction.codes)
    emit(f"{len(predictions)} lines predicted ({coded} with codes) -> {args.out}")
    return 0

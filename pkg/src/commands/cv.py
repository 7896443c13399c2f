import argparse
from pathlib import Path

from ..errors import UsageError
from ..gateways.corpus_file import load_corpus
from ..gateways.dictionary_file import load_dictionary
from ..gateways.word2vec_file import load_word2vec_text
from ..services.formatting import format_cv_table
from ..services.prior import build_code_documents, fit_tfidf
from ..services.training import cross_validate
from .common import (
    RunRecorder,
    add_config_arguments,
    add_model_arguments,
    emit,
    model_overrides,
    resolve_settings,
    write_report,
)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("cv", help="k-fold cross-validation on a training corpus")
    parser.add_argument("--corpus", type=Path, required=True)
    parser.add_argument("--dict", dest="dictionary", type=Path, help="required unless --no-prior")
    parser.add_argument("--embeddings", type=Path, help="word2vec text file")
    parser.add_argument("--folds", type=int)
    parser.add_argument("--jobs", type=int, help="folds trained in parallel processes")
    parser.add_argument("--report-file", type=Path, help="also write per-fold metrics as JSON")
    add_config_arguments(parser)
    add_model_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    overrides = model_overrides(args)
    overrides["train"].update(folds=args.folds, jobs=args.jobs)
    pretrained = None
    if args.embeddings is not None:
        pretrained, dim = load_word2vec_text(args.embeddings)
        overrides["model"]["embedding_dim"] = dim

    settings, seed = resolve_settings(args, overrides)
    with_prior = settings.model.use_prior
    if with_prior and args.dictionary is None:
        raise UsageError("cv needs --dict unless --no-prior is given")

    records = load_corpus(args.corpus)
    index = None
    if with_prior:
        index = fit_tfidf(build_code_documents(load_dictionary(args.dictionary)))

    report = cross_validate(records, index, settings, with_prior, pretrained)
    emit(format_cv_table(report))
    emit(f"seed {seed}")

    if args.report_file is not None:
        write_report(args.report_file, {"seed": seed, **report.as_dict()})
        recorder = RunRecorder("cv", settings, seed, config_path=args.config)
        recorder.read(args.corpus, args.dictionary, args.embeddings)
        recorder.wrote(args.report_file)
        recorder.finish_next_to(args.report_file)
    return 0

import argparse
from pathlib import Path

from ..gateways.corpus_file import load_corpus
from ..gateways.word2vec_file import load_word2vec_text
from ..services.corpus import corpus_statistics
from ..services.embeddings import token_coverage
from ..services.formatting import format_stats_table
from .common import emit, write_report


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("stats", help="size figures for one or more corpus files")
    parser.add_argument("corpora", type=Path, nargs="+")
    parser.add_argument(
        "--reference", type=Path, help="training corpus used to count unseen codes"
    )
    parser.add_argument("--embeddings", type=Path, help="report pretrained token coverage")
    parser.add_argument("--report-file", type=Path)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    reference = load_corpus(args.reference) if args.reference is not None else None
    pretrained = load_word2vec_text(args.embeddings)[0] if args.embeddings else None

    stats: dict[str, dict[str, object]] = {}
    for path in args.corpora:
        records = load_corpus(path)
        figures: dict[str, object] = dict(corpus_statistics(records, reference))
        if pretrained is not None:
            coverage = token_coverage((record.raw_text for record in records), pretrained)
            figures["embedding_coverage"] = f"{coverage:.4f}"
        stats[path.name] = figures

    emit(format_stats_table(stats))
    write_report(args.report_file, stats)
    return 0

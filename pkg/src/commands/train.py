import argparse
import logging
from pathlib import Path

from ..errors import UsageError
from ..gateways.checkpoint_store import save_checkpoint
from ..gateways.corpus_file import load_corpus
from ..gateways.dictionary_file import load_dictionary
from ..gateways.manifest_store import write_atomic
from ..gateways.word2vec_file import load_word2vec_text
from ..services.embeddings import token_coverage
from ..services.prior import build_code_documents, fit_tfidf
from ..services.training import fit_model
from .common import (
    RunRecorder,
    add_config_arguments,
    add_model_arguments,
    emit,
    model_overrides,
    resolve_settings,
)

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train a model and write a checkpoint")
    parser.add_argument("--corpus", type=Path, required=True)
    parser.add_argument("--dict", dest="dictionary", type=Path, help="required unless --no-prior")
    parser.add_argument("--embeddings", type=Path, help="word2vec text file")
    parser.add_argument("--out", type=Path, required=True, help="checkpoint path")
    add_config_arguments(parser)
    add_model_arguments(parser)
    parser.set_defaults(handler=run)


def loss_trace_path(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.name + ".losses.tsv")


def run(args: argparse.Namespace) -> int:
    overrides = model_overrides(args)
    pretrained = None
    if args.embeddings is not None:
        pretrained, dim = load_word2vec_text(args.embeddings)
        if args.embedding_dim is not None and args.embedding_dim != dim:
            raise UsageError(
                f"--embedding-dim {args.embedding_dim} conflicts with the {dim}-d vectors "
                f"in {args.embeddings}"
            )
        overrides["model"]["embedding_dim"] = dim

    settings, seed = resolve_settings(args, overrides)
    if settings.model.use_prior and args.dictionary is None:
        raise UsageError("train needs --dict unless --no-prior is given")

    records = load_corpus(args.corpus)
    index = None
    if settings.model.use_prior:
        index = fit_tfidf(build_code_documents(load_dictionary(args.dictionary)))

    recorder = RunRecorder("train", settings, seed, config_path=args.config)
    recorder.read(args.corpus, args.dictionary, args.embeddings)
    if pretrained is not None:
        coverage = token_coverage((record.raw_text for record in records), pretrained)
        recorder.extra["embedding_token_coverage"] = coverage
        logger.info("event=embedding_coverage split=train coverage=%.4f", coverage)

    result = fit_model(records, index, settings, pretrained)
    model = result.model
    save_checkpoint(model, args.out)

    trace_path = loss_trace_path(args.out)
    trace = "epoch\tmean_loss\n" + "".join(
        f"{epoch}\t{loss!r}\n" for epoch, loss in enumerate(result.losses, start=1)
    )
    write_atomic(trace_path, trace.encode("utf-8"))

    recorder.wrote(args.out, trace_path)
    recorder.extra.update(
        context_width=model.context_dim,
        prior_width=model.prior_dim,
        vocab_size=len(model.vocab),
        code_vocab_size=len(model.code_vocab),
        losses=result.losses,
    )
    recorder.finish_next_to(args.out)

    emit([f"epoch {epoch}: mean loss {loss:.6f}" for epoch, loss in enumerate(result.losses, 1)])
    emit(f"checkpoint written to {args.out} (context width {model.context_dim}, seed {seed})")
    return 0

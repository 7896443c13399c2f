import argparse
from pathlib import Path

from ..config import SYNTH_PRESETS
from ..gateways.dictionary_file import write_dictionary
from ..services.corpus import corpus_statistics
from ..services.datasynth import generate_corpus, generate_dictionary, write_split
from ..services.formatting import format_stats_table
from .common import RunRecorder, emit, resolve_settings

DICTIONARY_FILE = "dictionary.csv"
TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("synth", help="generate a synthetic dictionary and corpus split")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--preset", choices=sorted(SYNTH_PRESETS))
    source.add_argument("--params", dest="config", type=Path, help="TOML file with a [synth] section")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.set_defaults(handler=run, config=None)


def run(args: argparse.Namespace) -> int:
    overrides = {"synth": SYNTH_PRESETS[args.preset]} if args.preset else None
    settings, seed = resolve_settings(args, overrides, seed_section="synth")
    config = settings.synth

    dictionary = generate_dictionary(config)
    records = generate_corpus(config, dictionary)

    out_dir: Path = args.out_dir
    dictionary_path = out_dir / DICTIONARY_FILE
    train_path = out_dir / TRAIN_FILE
    test_path = out_dir / TEST_FILE
    write_dictionary(dictionary.entries, dictionary_path)
    train, test = write_split(records, config.train_fraction, seed, (train_path, test_path))

    recorder = RunRecorder("synth", settings, seed, config_path=args.config)
    recorder.wrote(dictionary_path, train_path, test_path)
    recorder.extra.update(preset=args.preset, entries=len(dictionary.entries))
    recorder.finish(out_dir / "manifest.json")

    emit(
        format_stats_table(
            {
                TRAIN_FILE: corpus_statistics(train),
                TEST_FILE: corpus_statistics(test, reference=train),
            }
        )
    )
    emit(f"{len(dictionary.entries)} dictionary entries, seed {seed} -> {out_dir}")
    return 0

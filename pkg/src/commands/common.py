import argparse
import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from ..config import Settings
from ..gateways.manifest_store import manifest_path_for, utc_now_iso, write_atomic, write_manifest
from ..models import RunManifest
from ..utils.ids import file_digest, random_seed

logger = logging.getLogger(__name__)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML file with [model]/[train]/[synth] sections")
    parser.add_argument("--seed", type=int, help="master seed; a random one is drawn and recorded if omitted")


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model and training overrides")
    group.add_argument("--no-prior", action="store_true", help="drop the dictionary prior from the context")
    group.add_argument("--enc-hidden", type=int)
    group.add_argument("--dec-hidden", type=int)
    group.add_argument("--embedding-dim", type=int)
    group.add_argument("--max-in", type=int)
    group.add_argument("--max-out", type=int)
    group.add_argument("--dropout", type=float)
    group.add_argument("--min-count", type=int)
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--lr", type=float)
    group.add_argument("--clip-norm", type=float)
    group.add_argument("--no-shuffle", action="store_true", help="keep corpus order in every epoch")


def model_overrides(args: argparse.Namespace) -> dict[str, dict[str, object]]:
    return {
        "model": {
            "enc_hidden": args.enc_hidden,
            "dec_hidden": args.dec_hidden,
            "embedding_dim": args.embedding_dim,
            "max_in": args.max_in,
            "max_out": args.max_out,
            "dropout": args.dropout,
            "min_count": args.min_count,
            "use_prior": False if args.no_prior else None,
        },
        "train": {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "clip_norm": args.clip_norm,
            "shuffle": False if args.no_shuffle else None,
        },
    }


def resolve_settings(
    args: argparse.Namespace,
    overrides: Mapping[str, Mapping[str, object]] | None = None,
    seed_section: str = "train",
) -> tuple[Settings, int]:
    settings = Settings.load(args.config, overrides)
    configured = getattr(settings, seed_section).seed
    seed = args.seed if args.seed is not None else configured
    if seed is None:
        seed = random_seed()
        logger.info("event=seed_drawn seed=%s", seed)
    return settings.with_seed(seed), seed


@dataclass
class RunRecorder:
    """Collects what a command read and wrote, then emits its manifest."""

    command: str
    settings: Settings
    seed: int
    started_at: str = field(default_factory=utc_now_iso)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    extra: dict[str, object] = field(default_factory=dict)
    config_path: Path | None = None

    def __post_init__(self) -> None:
        self.read(self.config_path)

    def read(self, *paths: Path | None) -> None:
        for path in paths:
            if path is not None and path.is_file():
                self.inputs[str(path)] = file_digest(path)

    def wrote(self, *paths: Path) -> None:
        self.outputs.extend(str(path) for path in paths)

    def finish(self, manifest_path: Path) -> Path:
        manifest = RunManifest(
            command=self.command,
            config=self.settings.resolved(),
            input_digests=dict(self.inputs),
            seed=self.seed,
            started_at=self.started_at,
            finished_at=utc_now_iso(),
            outputs=list(self.outputs),
            extra=dict(self.extra),
        )
        return write_manifest(manifest, manifest_path)

    def finish_next_to(self, output: Path) -> Path:
        return self.finish(manifest_path_for(output))


def write_report(path: Path | None, report: Mapping[str, object]) -> None:
    if path is None:
        return
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    write_atomic(path, payload.encode("utf-8"))
    logger.info("event=report_written path=%s", path)


def emit(lines: Iterable[str] | str) -> None:
    text = lines if isinstance(lines, str) else "\n".join(lines)
    print(text)

import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np

from ..config import ModelConfig, Settings, TrainConfig
from ..errors import NumericalError
from ..models import MetricsReport, Record
from ..utils.ids import derive_seed
from .corpus import PAD, build_code_vocab, build_vocab
from .embeddings import build_embedding_matrix
from .evaluation import predict_corpus, score
from .model import Gradients, Seq2SeqModel, batch_forward_loss, encode_records
from .prior import TfIdfIndex
from .tensor import DTYPE, Rng

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_parameters(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value, dtype=DTYPE) for name, value in params.items()},
            v={name: np.zeros_like(value, dtype=DTYPE) for name, value in params.items()},
        )

    def check_shapes(self, params: Mapping[str, np.ndarray]) -> None:
        for name, value in params.items():
            if self.m[name].shape != value.shape or self.v[name].shape != value.shape:
                raise NumericalError(f"Adam moments for {name} no longer mirror the parameter")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[Mapping[str, np.ndarray], AdamState]:
    if grads.keys() != params.keys():
        raise ValueError(
            f"Gradient names {sorted(grads)} do not match parameters {sorted(params)}"
        )
    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ValueError(
                f"Gradient of {name} has shape {grad.shape}, parameter {params[name].shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"Non-finite gradient for parameter {name}")

    state.t += 1
    correction1 = 1.0 - config.beta1**state.t
    correction2 = 1.0 - config.beta2**state.t
    for name, param in params.items():
        grad = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        param -= config.lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps_adam)
    state.check_shapes(params)
    return params, state


def clip_gradients(grads: Gradients, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(grad * grad)) for grad in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for grad in grads.values():
            grad *= scale
    return norm


def make_batches(
    items: Sequence[T], batch_size: int, rng: Rng | None, shuffle: bool = True
) -> list[list[T]]:
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order: Sequence[int] = range(len(items))
    if shuffle:
        if rng is None:
            raise ValueError("Shuffled batches need an Rng")
        order = rng.permutation(len(items)).tolist()
    return [
        [items[i] for i in order[start : start + batch_size]]
        for start in range(0, len(items), batch_size)
    ]


@dataclass
class TrainResult:
    model: Seq2SeqModel
    losses: list[float] = field(default_factory=list)


def train(model: Seq2SeqModel, records: Sequence[Record], config: TrainConfig) -> TrainResult:
    if config.seed is None:
        raise ValueError("Training needs an explicit seed")
    if not records:
        raise ValueError("Cannot train on an empty corpus")

    rng = Rng(config.seed).child("train")
    batch_rng = rng.child("batches")
    dropout_rng = rng.child("dropout")
    data = encode_records(model, records)
    params = model.parameters()
    state = AdamState.for_parameters(params)

    losses: list[float] = []
    for epoch in range(1, config.epochs + 1):
        batches = make_batches(list(range(len(data))), config.batch_size, batch_rng, config.shuffle)
        total = 0.0
        for batch_number, rows in enumerate(batches, start=1):
            batch = data.take(np.asarray(rows, dtype=np.int64))
            try:
                loss, grads = batch_forward_loss(
                    model,
                    batch.token_ids,
                    batch.target_ids,
                    batch.priors,
                    training=True,
                    rng=dropout_rng,
                )
                if not math.isfinite(loss):
                    raise NumericalError(f"Non-finite loss {loss}")
                # PAD stays the zero vector.
                grads["embedding"][PAD] = 0.0
                if config.clip_norm is not None:
                    clip_gradients(grads, config.clip_norm)
                adam_step(params, grads, state, config)
            except NumericalError as exc:
                raise NumericalError(
                    f"Training failed at epoch {epoch}, batch {batch_number}: {exc}"
                ) from exc
            total += loss * len(rows)

        mean_loss = total / len(data)
        losses.append(mean_loss)
        logger.info(
            "event=epoch_completed epoch=%s batches=%s mean_loss=%.6f",
            epoch,
            len(batches),
            mean_loss,
        )

    model.metadata.update(
        epochs_completed=int(model.metadata.get("epochs_completed", 0)) + config.epochs,
        final_loss=losses[-1],
        seed=config.seed,
    )
    return TrainResult(model=model, losses=losses)


def build_model(
    records: Sequence[Record],
    index: TfIdfIndex | None,
    config: ModelConfig,
    pretrained: Mapping[str, np.ndarray] | None,
    rng: Rng,
) -> Seq2SeqModel:
    vocab = build_vocab(records, config.min_count)
    code_vocab = build_code_vocab(records)
    embeddings = build_embedding_matrix(
        vocab, pretrained, config.embedding_dim, rng.child("embedding")
    )
    model = Seq2SeqModel.initialize(
        config,
        vocab,
        code_vocab,
        index if config.use_prior else None,
        embeddings,
        rng.child("weights"),
    )
    logger.info(
        "event=model_built vocab=%s codes=%s context_width=%s",
        len(vocab),
        len(code_vocab) - 2,
        model.context_dim,
    )
    return model


def fit_model(
    records: Sequence[Record],
    index: TfIdfIndex | None,
    settings: Settings,
    pretrained: Mapping[str, np.ndarray] | None = None,
) -> TrainResult:
    seed = settings.train.seed
    if seed is None:
        raise ValueError("fit_model needs settings with a seed")
    model = build_model(records, index, settings.model, pretrained, Rng(seed).child("init"))
    return train(model, records, settings.train)


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    if k < 2:
        raise ValueError("Cross-validation needs at least two folds")
    if n < k:
        raise ValueError(f"Cannot split {n} records into {k} folds")
    permutation = Rng(seed).child("kfold").permutation(n)
    return [np.sort(fold) for fold in np.array_split(permutation, k)]


@dataclass(frozen=True)
class FoldResult:
    fold: int
    metrics: MetricsReport
    losses: tuple[float, ...]
    train_size: int
    held_out_size: int


@dataclass(frozen=True)
class CrossValidationReport:
    folds: tuple[FoldResult, ...]
    with_prior: bool

    @property
    def mean_precision(self) -> float:
        return float(np.mean([fold.metrics.precision for fold in self.folds]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([fold.metrics.recall for fold in self.folds]))

    @property
    def mean_f_measure(self) -> float:
        return float(np.mean([fold.metrics.f_measure for fold in self.folds]))

    def as_dict(self) -> dict[str, object]:
        return {
            "with_prior": self.with_prior,
            "folds": [
                {
                    "fold": fold.fold,
                    "train_size": fold.train_size,
                    "held_out_size": fold.held_out_size,
                    "final_loss": fold.losses[-1],
                    **fold.metrics.as_dict(),
                }
                for fold in self.folds
            ],
            "mean": {
                "precision": self.mean_precision,
                "recall": self.mean_recall,
                "f_measure": self.mean_f_measure,
            },
        }


def _run_fold(
    fold: int,
    train_records: list[Record],
    held_out: list[Record],
    index: TfIdfIndex | None,
    settings: Settings,
    pretrained: Mapping[str, np.ndarray] | None,
) -> FoldResult:
    result = fit_model(train_records, index, settings, pretrained)
    metrics = score(predict_corpus(result.model, held_out), held_out)
    logger.info(
        "event=fold_evaluated fold=%s p=%.4f r=%.4f f=%.4f",
        fold,
        metrics.precision,
        metrics.recall,
        metrics.f_measure,
    )
    return FoldResult(
        fold=fold,
        metrics=metrics,
        losses=tuple(result.losses),
        train_size=len(train_records),
        held_out_size=len(held_out),
    )


def cross_validate(
    records: Sequence[Record],
    index: TfIdfIndex | None,
    settings: Settings,
    with_prior: bool,
    pretrained: Mapping[str, np.ndarray] | None = None,
    jobs: int | None = None,
) -> CrossValidationReport:
    seed = settings.train.seed
    if seed is None:
        raise ValueError("Cross-validation needs settings with a seed")
    if with_prior and index is None:
        raise ValueError("Cross-validation with the prior needs a dictionary index")
    jobs = jobs or settings.train.jobs

    folds = kfold_split(len(records), settings.train.folds, seed)
    model_config = settings.model.model_copy(update={"use_prior": with_prior})
    tasks = []
    for number, held_out_rows in enumerate(folds, start=1):
        held_out_set = set(held_out_rows.tolist())
        fold_settings = settings.model_copy(
            update={
                "model": model_config,
                "train": settings.train.model_copy(
                    update={"seed": derive_seed(seed, f"fold-{number}")}
                ),
            }
        )
        tasks.append(
            (
                number,
                [records[i] for i in range(len(records)) if i not in held_out_set],
                [records[i] for i in held_out_rows],
                index if with_prior else None,
                fold_settings,
                pretrained,
            )
        )

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as executor:
            futures = [executor.submit(_run_fold, *task) for task in tasks]
            results = [future.result() for future in futures]
    else:
        results = [_run_fold(*task) for task in tasks]

    report = CrossValidationReport(folds=tuple(results), with_prior=with_prior)
    logger.info(
        "event=cross_validation_completed folds=%s with_prior=%s mean_f=%.4f",
        len(results),
        with_prior,
        report.mean_f_measure,
    )
    return report

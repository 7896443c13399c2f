import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from .corpus import PAD, UNK, Vocab, tokenize
from .tensor import DTYPE, Rng

logger = logging.getLogger(__name__)

OOV_BOUND = 0.25


@dataclass(frozen=True)
class EmbeddingMatrix:
    matrix: np.ndarray
    dim: int
    coverage: float


def build_embedding_matrix(
    vocab: Vocab,
    pretrained: Mapping[str, np.ndarray] | None,
    dim: int,
    rng: Rng,
) -> EmbeddingMatrix:
    if pretrained:
        first = next(iter(pretrained.values()))
        if first.shape != (dim,):
            raise ValueError(
                f"Embedding dimension {dim} does not match pretrained vectors {first.shape}"
            )

    # Every row is drawn; pretrained rows are overwritten below.
    matrix = rng.uniform(-OOV_BOUND, OOV_BOUND, (len(vocab), dim))
    matrix[PAD] = 0.0

    found = 0
    for token, index in vocab.token_to_id.items():
        if index in (PAD, UNK):
            continue
        vector = (pretrained or {}).get(token)
        if vector is not None:
            matrix[index] = vector
            found += 1

    regular = len(vocab) - 2
    coverage = found / regular if regular else 0.0
    logger.info(
        "event=embedding_matrix_built rows=%s dim=%s coverage=%.4f",
        len(vocab),
        dim,
        coverage,
    )
    return EmbeddingMatrix(matrix=matrix.astype(DTYPE), dim=dim, coverage=coverage)


def token_coverage(
    texts: Iterable[str], pretrained: Mapping[str, np.ndarray]
) -> float:
    total = 0
    covered = 0
    for text in texts:
        for token in tokenize(text):
            total += 1
            covered += token in pretrained
    return covered / total if total else 0.0


def lookup(matrix: np.ndarray, token_ids: np.ndarray) -> np.ndarray:
    return matrix[token_ids]


def lookup_backward(
    d_rows: np.ndarray, token_ids: np.ndarray, vocab_size: int
) -> np.ndarray:
    grad = np.zeros((vocab_size, d_rows.shape[-1]), dtype=DTYPE)
    np.add.at(grad, token_ids.reshape(-1), d_rows.reshape(-1, d_rows.shape[-1]))
    return grad

import logging
from pathlib import Path

import numpy as np

from ..errors import EmbeddingFormatError

logger = logging.getLogger(__name__)


def load_word2vec_text(path: Path) -> tuple[dict[str, np.ndarray], int]:
    if not path.is_file():
        raise EmbeddingFormatError(f"Embedding file not found: {path}")

    vectors: dict[str, np.ndarray] = {}
    duplicates = 0
    with path.open(encoding="utf-8", errors="strict") as handle:
        header = handle.readline().split()
        try:
            declared_count, dim = (int(value) for value in header)
        except ValueError as exc:
            raise EmbeddingFormatError(
                f"{path}:1: header must be '<count> <dim>', got {' '.join(header)!r}"
            ) from exc
        if dim < 1:
            raise EmbeddingFormatError(f"{path}:1: dimension must be positive")

        for line_number, line in enumerate(handle, start=2):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{line_number}: expected {dim} values for {token!r}, "
                    f"got {len(values)}"
                )
            if token in vectors:
                duplicates += 1
                continue
            try:
                vectors[token] = np.asarray(values, dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(
                    f"{path}:{line_number}: non-numeric vector for {token!r}"
                ) from exc

    if duplicates:
        logger.warning(
            "event=embedding_duplicates_skipped path=%s duplicates=%s", path, duplicates
        )
    if len(vectors) + duplicates != declared_count:
        logger.warning(
            "event=embedding_count_mismatch path=%s declared=%s read=%s",
            path,
            declared_count,
            len(vectors) + duplicates,
        )
    logger.info("event=embeddings_loaded path=%s tokens=%s dim=%s", path, len(vectors), dim)
    return vectors, dim

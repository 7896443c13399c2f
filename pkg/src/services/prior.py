import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.preprocessing import normalize

from ..models import CodeDocument, DictEntry, IcdCode
from .corpus import tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TfIdfIndex:
    # Row j of doc_matrix is the L2-normalised document of code_order[j].
    term_to_id: dict[str, int]
    idf: np.ndarray
    doc_matrix: csr_matrix
    code_order: tuple[IcdCode, ...]

    def __post_init__(self) -> None:
        if list(self.code_order) != sorted(set(self.code_order)):
            raise ValueError("code_order must be strictly increasing")
        if self.doc_matrix.shape != (len(self.code_order), len(self.term_to_id)):
            raise ValueError(
                f"doc_matrix shape {self.doc_matrix.shape} does not match "
                f"{len(self.code_order)} codes x {len(self.term_to_id)} terms"
            )
        if self.idf.shape != (len(self.term_to_id),):
            raise ValueError("idf must hold one weight per term")

    @property
    def dimension(self) -> int:
        return len(self.code_order)


def build_code_documents(entries: Sequence[DictEntry]) -> list[CodeDocument]:
    if not entries:
        raise ValueError("Cannot build code documents from an empty dictionary")
    texts: dict[IcdCode, list[str]] = {}
    for entry in entries:
        texts.setdefault(entry.icd1, []).append(entry.diagnosis_text)
    return [CodeDocument(code=code, text=" ".join(parts)) for code, parts in texts.items()]


def fit_tfidf(docs: Sequence[CodeDocument]) -> TfIdfIndex:
    if not docs:
        raise ValueError("Cannot fit TF-IDF on zero documents")
    ordered = sorted(docs, key=lambda doc: doc.code)
    code_order = tuple(doc.code for doc in ordered)
    if len(set(code_order)) != len(code_order):
        raise ValueError("Each code must own exactly one document")

    vectorizer = TfidfVectorizer(
        tokenizer=tokenize,
        lowercase=False,
        token_pattern=None,
        norm="l2",
        smooth_idf=True,
        sublinear_tf=False,
        dtype=np.float64,
    )
    try:
        matrix = vectorizer.fit_transform([doc.text for doc in ordered])
    except ValueError:
        logger.warning("event=tfidf_empty_vocabulary documents=%s", len(ordered))
        return TfIdfIndex(
            term_to_id={},
            idf=np.zeros(0),
            doc_matrix=csr_matrix((len(ordered), 0), dtype=np.float64),
            code_order=code_order,
        )

    index = TfIdfIndex(
        term_to_id={term: int(column) for term, column in vectorizer.vocabulary_.items()},
        idf=np.asarray(vectorizer.idf_, dtype=np.float64),
        doc_matrix=csr_matrix(matrix, dtype=np.float64),
        code_order=code_order,
    )
    logger.info(
        "event=tfidf_fitted codes=%s terms=%s", index.dimension, len(index.term_to_id)
    )
    return index


def query_vector(index: TfIdfIndex, raw_text: str) -> csr_matrix | None:
    counts = Counter(
        index.term_to_id[token]
        for token in tokenize(raw_text)
        if token in index.term_to_id
    )
    if not counts:
        return None
    columns = np.array(sorted(counts), dtype=np.int64)
    weights = np.array([counts[column] for column in columns], dtype=np.float64)
    weights *= index.idf[columns]
    query = csr_matrix(
        (weights, (np.zeros_like(columns), columns)),
        shape=(1, len(index.term_to_id)),
    )
    return normalize(query, norm="l2")


def cosine_vector(index: TfIdfIndex, raw_text: str) -> np.ndarray:
    query = query_vector(index, raw_text)
    if query is None:
        return np.zeros(index.dimension, dtype=np.float64)
    similarities = (index.doc_matrix @ query.T).toarray().ravel()
    return np.clip(similarities, 0.0, 1.0)


def prior_matrix(index: TfIdfIndex | None, texts: Sequence[str]) -> np.ndarray:
    if index is None:
        return np.zeros((len(texts), 0), dtype=np.float64)
    if not texts:
        return np.zeros((0, index.dimension), dtype=np.float64)
    return np.vstack([cosine_vector(index, text) for text in texts])

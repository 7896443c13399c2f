import logging
import re
from collections.abc import Sequence

import numpy as np

from ..errors import KeyMismatchError
from ..models import IcdCode, MetricsReport, Prediction, Record
from .corpus import EOS, PAD, CodeVocab
from .model import Seq2SeqModel, encode_records, predict_logits
from .prior import TfIdfIndex, cosine_vector

logger = logging.getLogger(__name__)

_FRAGMENT_RE = re.compile(r"[,/]")
_MAX_LISTED_KEYS = 10


def greedy_decode(logits: np.ndarray, code_vocab: CodeVocab) -> list[IcdCode]:
    # Ties go to the lowest id.
    codes: list[IcdCode] = []
    for code_id in np.argmax(logits, axis=-1):
        if code_id == EOS:
            break
        if code_id == PAD:
            continue
        code = code_vocab.code_for(int(code_id))
        if code not in codes:
            codes.append(code)
    return codes


def _describe_keys(keys: set[tuple[str, int]]) -> str:
    listed = sorted(keys)[:_MAX_LISTED_KEYS]
    more = len(keys) - len(listed)
    text = ", ".join(f"{doc_id};{line_id}" for doc_id, line_id in listed)
    return text + (f" (+{more} more)" if more > 0 else "")


def score(predictions: Sequence[Prediction], golds: Sequence[Record]) -> MetricsReport:
    predicted = {prediction.key: set(prediction.codes) for prediction in predictions}
    expected = {record.key: set(record.gold_codes) for record in golds}

    missing_predictions = expected.keys() - predicted.keys()
    missing_golds = predicted.keys() - expected.keys()
    if missing_predictions or missing_golds:
        problems = []
        if missing_predictions:
            problems.append(f"no prediction for {_describe_keys(missing_predictions)}")
        if missing_golds:
            problems.append(f"no gold line for {_describe_keys(missing_golds)}")
        raise KeyMismatchError("Prediction/gold key mismatch: " + "; ".join(problems))

    tp = fp = fn = 0
    for key, gold in expected.items():
        pred = predicted[key]
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    return MetricsReport(tp=tp, fp=fp, fn=fn)


def predict_corpus(
    model: Seq2SeqModel, records: Sequence[Record], batch_size: int = 256
) -> list[Prediction]:
    predictions: list[Prediction] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        batch = encode_records(model, chunk)
        logits = predict_logits(model, batch.token_ids, batch.priors)
        for record, record_logits in zip(chunk, logits, strict=True):
            predictions.append(
                Prediction(
                    doc_id=record.doc_id,
                    line_id=record.line_id,
                    codes=tuple(greedy_decode(record_logits, model.code_vocab)),
                )
            )
    logger.info("event=corpus_predicted records=%s", len(predictions))
    return predictions


def dictionary_baseline(index: TfIdfIndex, records: Sequence[Record]) -> list[Prediction]:
    predictions = []
    for record in records:
        codes: list[IcdCode] = []
        for fragment in _FRAGMENT_RE.split(record.raw_text):
            similarities = cosine_vector(index, fragment)
            if similarities.size == 0 or similarities.max() <= 0.0:
                continue
            code = index.code_order[int(np.argmax(similarities))]
            if code not in codes:
                codes.append(code)
        predictions.append(
            Prediction(doc_id=record.doc_id, line_id=record.line_id, codes=tuple(codes))
        )
    return predictions

import logging
from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path

from ..errors import CorpusFormatError
from ..models import IcdCode, Prediction, Record

logger = logging.getLogger(__name__)

HEADER = "doc_id;line_id;raw_text;icd_code"
_FIELD_COUNT = 4


def iter_rows(path: Path, header_field: str) -> Iterator[tuple[int, list[str]]]:
    with path.open(encoding="utf-8") as handle:
        first_row = True
        for line_number, line in enumerate(handle, start=1):
            row = line.rstrip("\r\n")
            if not row.strip() or row.lstrip().startswith("#"):
                continue
            fields = row.split(";")
            if first_row and fields[0].strip() == header_field:
                first_row = False
                continue
            first_row = False
            yield line_number, fields


def load_corpus(path: Path) -> list[Record]:
    if not path.is_file():
        raise CorpusFormatError(f"Corpus file not found: {path}")

    texts: dict[tuple[str, int], str] = {}
    codes: dict[tuple[str, int], list[IcdCode]] = {}
    try:
        rows = list(iter_rows(path, "doc_id"))
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid UTF-8 ({exc})") from exc

    for line_number, fields in rows:
        location = f"{path}:{line_number}"
        if len(fields) != _FIELD_COUNT:
            raise CorpusFormatError(
                f"{location}: expected {_FIELD_COUNT} ';'-separated fields, "
                f"got {len(fields)} (raw text must not contain ';')"
            )
        doc_id, raw_line_id, raw_text, raw_code = (value.strip() for value in fields)
        if not doc_id:
            raise CorpusFormatError(f"{location}: empty doc_id")
        try:
            line_id = int(raw_line_id)
        except ValueError as exc:
            raise CorpusFormatError(
                f"{location}: line_id must be an integer, got {raw_line_id!r}"
            ) from exc
        if line_id < 0:
            raise CorpusFormatError(f"{location}: line_id must be nonnegative")

        key = (doc_id, line_id)
        if key in texts and texts[key] != raw_text:
            raise CorpusFormatError(
                f"{location}: rows for {doc_id};{line_id} disagree on raw text"
            )
        texts.setdefault(key, raw_text)
        line_codes = codes.setdefault(key, [])
        if not raw_code:
            continue
        try:
            code = IcdCode.parse(raw_code)
        except ValueError as exc:
            raise CorpusFormatError(f"{location}: {exc}") from exc
        if code in line_codes:
            raise CorpusFormatError(
                f"{location}: duplicate row for {doc_id};{line_id};{code}"
            )
        line_codes.append(code)

    records = [
        Record(doc_id=doc_id, line_id=line_id, raw_text=text, gold_codes=tuple(codes[(doc_id, line_id)]))
        for (doc_id, line_id), text in texts.items()
    ]
    logger.info("event=corpus_loaded path=%s records=%s", path, len(records))
    return records


def _check_text(value: str, what: str) -> str:
    if ";" in value or "\n" in value:
        raise CorpusFormatError(f"{what} must not contain ';' or newlines: {value!r}")
    return value


def _rows(doc_id: str, line_id: int, raw_text: str, codes: Sequence[IcdCode]) -> Iterable[str]:
    prefix = f"{_check_text(doc_id, 'doc_id')};{line_id};{_check_text(raw_text, 'raw text')}"
    if not codes:
        yield f"{prefix};"
    for code in codes:
        yield f"{prefix};{code.value}"


def write_corpus(records: Iterable[Record], path: Path) -> None:
    lines = [HEADER]
    for record in records:
        lines.extend(_rows(record.doc_id, record.line_id, record.raw_text, record.gold_codes))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("event=corpus_written path=%s rows=%s", path, len(lines) - 1)


def write_predictions(
    predictions: Iterable[Prediction], records: Sequence[Record], path: Path
) -> None:
    texts = {record.key: record.raw_text for record in records}
    lines = [HEADER]
    for prediction in predictions:
        lines.extend(
            _rows(prediction.doc_id, prediction.line_id, texts.get(prediction.key, ""), prediction.codes)
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("event=predictions_written path=%s rows=%s", path, len(lines) - 1)

import logging
from collections.abc import Iterable
from pathlib import Path

from ..errors import DictionaryFormatError
from ..models import DictEntry, IcdCode
from .corpus_file import iter_rows

logger = logging.getLogger(__name__)

HEADER = "diagnosis_text;icd1;icdC;icd2"


def _optional_code(raw: str, location: str) -> IcdCode | None:
    if not raw.strip():
        return None
    try:
        return IcdCode.parse(raw)
    except ValueError as exc:
        raise DictionaryFormatError(f"{location}: {exc}") from exc


def load_dictionary(path: Path) -> list[DictEntry]:
    if not path.is_file():
        raise DictionaryFormatError(f"Dictionary file not found: {path}")

    entries: list[DictEntry] = []
    try:
        rows = list(iter_rows(path, "diagnosis_text"))
    except UnicodeDecodeError as exc:
        raise DictionaryFormatError(f"{path}: not valid UTF-8 ({exc})") from exc

    for line_number, fields in rows:
        location = f"{path}:{line_number}"
        if not 2 <= len(fields) <= 4:
            raise DictionaryFormatError(
                f"{location}: expected 'diagnosis_text;icd1;icdC;icd2', "
                f"got {len(fields)} fields"
            )
        fields = fields + [""] * (4 - len(fields))
        text = fields[0].strip()
        if not text:
            raise DictionaryFormatError(f"{location}: empty diagnosis text")
        icd1 = _optional_code(fields[1], location)
        if icd1 is None:
            raise DictionaryFormatError(f"{location}: missing icd1 code")
        entries.append(
            DictEntry(
                diagnosis_text=text,
                icd1=icd1,
                icd_c=_optional_code(fields[2], location),
                icd2=_optional_code(fields[3], location),
            )
        )

    logger.info("event=dictionary_loaded path=%s entries=%s", path, len(entries))
    return entries


def write_dictionary(entries: Iterable[DictEntry], path: Path) -> None:
    lines = [HEADER]
    for entry in entries:
        if ";" in entry.diagnosis_text:
            raise DictionaryFormatError(
                f"Diagnosis text must not contain ';': {entry.diagnosis_text!r}"
            )
        optional = [
            code.value if code is not None else ""
            for code in (entry.icd_c, entry.icd2)
        ]
        lines.append(";".join([entry.diagnosis_text, entry.icd1.value, *optional]))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("event=dictionary_written path=%s entries=%s", path, len(lines) - 1)

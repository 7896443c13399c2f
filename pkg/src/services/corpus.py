import logging
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from ..models import EncodedRecord, IcdCode, Record

logger = logging.getLogger(__name__)

PAD = 0
UNK = 1
EOS = 1

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Any run of characters that is not a letter or digit separates tokens.
_SEPARATOR_RE = re.compile(r"[\W_]+", re.UNICODE)


def tokenize(raw_text: str) -> list[str]:
    return [token for token in _SEPARATOR_RE.split(raw_text.lower()) if token]


def _ranked(counts: Counter) -> list:
    return sorted(counts, key=lambda item: (-counts[item], item))


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.id_to_token[:2] != (PAD_TOKEN, UNK_TOKEN):
            raise ValueError("Vocab must start with the PAD and UNK specials")
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise ValueError("Vocab tokens must be unique")
        object.__setattr__(
            self,
            "token_to_id",
            {token: index for index, token in enumerate(self.id_to_token)},
        )

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: object) -> bool:
        return token in self.token_to_id

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(token, UNK) for token in tokens]


@dataclass(frozen=True)
class CodeVocab:
    codes: tuple[IcdCode, ...]
    code_to_id: dict[IcdCode, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.codes)) != len(self.codes):
            raise ValueError("CodeVocab codes must be unique")
        object.__setattr__(
            self,
            "code_to_id",
            {code: index + 2 for index, code in enumerate(self.codes)},
        )

    def __len__(self) -> int:
        return len(self.codes) + 2

    def __contains__(self, code: object) -> bool:
        return code in self.code_to_id

    def code_for(self, code_id: int) -> IcdCode | None:
        if code_id in (PAD, EOS):
            return None
        return self.codes[code_id - 2]

    def decode(self, ids: Iterable[int]) -> list[IcdCode]:
        return [code for code in map(self.code_for, ids) if code is not None]


def build_vocab(records: Sequence[Record], min_count: int = 1) -> Vocab:
    if not records:
        raise ValueError("Cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    counts = Counter(
        token for record in records for token in tokenize(record.raw_text)
    )
    kept = [token for token in _ranked(counts) if counts[token] >= min_count]
    return Vocab((PAD_TOKEN, UNK_TOKEN, *kept))


def build_code_vocab(records: Sequence[Record]) -> CodeVocab:
    counts = Counter(code for record in records for code in record.gold_codes)
    return CodeVocab(tuple(_ranked(counts)))


def encode_record(
    record: Record,
    vocab: Vocab,
    code_vocab: CodeVocab,
    max_in: int,
    max_out: int,
) -> EncodedRecord:
    if max_in < 1 or max_out < 2:
        raise ValueError("encode_record needs max_in >= 1 and max_out >= 2")

    tokens = tokenize(record.raw_text)
    token_ids = vocab.encode(tokens[:max_in])
    token_ids += [PAD] * (max_in - len(token_ids))

    known = [code for code in record.gold_codes if code in code_vocab]
    if len(known) != len(record.gold_codes):
        logger.debug(
            "event=record_unseen_codes doc_id=%s line_id=%s dropped=%s",
            record.doc_id,
            record.line_id,
            len(record.gold_codes) - len(known),
        )
    target_ids = [code_vocab.code_to_id[code] for code in known[: max_out - 1]]
    target_ids.append(EOS)
    target_ids += [PAD] * (max_out - len(target_ids))

    truncated = len(tokens) > max_in or len(known) > max_out - 1
    if truncated:
        logger.warning(
            "event=record_truncated doc_id=%s line_id=%s tokens=%s codes=%s",
            record.doc_id,
            record.line_id,
            len(tokens),
            len(known),
        )
    return EncodedRecord(tuple(token_ids), tuple(target_ids), truncated)


def corpus_statistics(
    records: Sequence[Record], reference: Sequence[Record] | None = None
) -> dict[str, int]:
    codes = [code for record in records for code in record.gold_codes]
    unique = set(codes)
    stats = {
        "certificates": len({record.doc_id for record in records}),
        "lines": len(records),
        "tokens": sum(len(tokenize(record.raw_text)) for record in records),
        "total_codes": len(codes),
        "unique_codes": len(unique),
    }
    if reference is not None:
        seen = {code for record in reference for code in record.gold_codes}
        stats["unseen_codes"] = len(unique - seen)
    return stats

import itertools
import logging
import string
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from ..config import SynthConfig
from ..gateways.corpus_file import write_corpus
from ..models import DictEntry, IcdCode, Record
from .tensor import Rng

logger = logging.getLogger(__name__)

_ONSETS = (
    "b", "br", "c", "d", "f", "gl", "h", "k", "l", "m",
    "n", "ph", "pr", "r", "s", "st", "t", "tr", "v", "z",
)  # fmt: skip
_VOWELS = ("a", "e", "i", "o", "u")
_CODAS = ("l", "n", "r", "x")

STEMS: tuple[str, ...] = tuple(
    f"{onset}{vowel}{coda}"
    for onset, vowel, coda in itertools.product(_ONSETS, _VOWELS, _CODAS)
)[:200]
CONDITION_SUFFIXES = ("itis", "osis", "emia", "oma", "pathy")
MODIFIER_SUFFIXES = ("al", "ic", "ous")

_MAX_SYNONYM_ATTEMPTS = 100
_MIN_MISSPELL_LENGTH = 4


@dataclass(frozen=True)
class SyntheticDictionary:
    entries: tuple[DictEntry, ...]
    phrases: dict[IcdCode, tuple[str, ...]]

    @property
    def codes(self) -> tuple[IcdCode, ...]:
        return tuple(self.phrases)


def _require_seed(config: SynthConfig) -> int:
    if config.seed is None:
        raise ValueError("Synthetic generation needs an explicit seed")
    return config.seed


def _modifier(rng: Rng) -> str:
    stem = STEMS[rng.integers(0, len(STEMS))]
    return stem + MODIFIER_SUFFIXES[rng.integers(0, len(MODIFIER_SUFFIXES))]


def _draw_codes(n_codes: int, rng: Rng) -> list[IcdCode]:
    letters = string.ascii_uppercase
    picks = rng.permutation(len(letters) * 1000)[:n_codes]
    return sorted(IcdCode(f"{letters[pick // 1000]}{pick % 1000:03d}") for pick in picks)


def generate_dictionary(config: SynthConfig) -> SyntheticDictionary:
    rng = Rng(_require_seed(config)).child("dictionary")
    conditions = [
        stem + suffix for stem, suffix in itertools.product(STEMS, CONDITION_SUFFIXES)
    ]
    if config.n_codes > len(conditions):
        raise ValueError(f"At most {len(conditions)} synthetic codes are supported")

    codes = _draw_codes(config.n_codes, rng)
    condition_order = rng.permutation(len(conditions))
    entries: list[DictEntry] = []
    phrases: dict[IcdCode, tuple[str, ...]] = {}
    for code, condition_index in zip(codes, condition_order, strict=False):
        condition = conditions[condition_index]
        variants = [f"{_modifier(rng)} {condition}"]
        attempts = 0
        while len(variants) < 1 + config.synonyms_per_code:
            attempts += 1
            if attempts > _MAX_SYNONYM_ATTEMPTS:
                raise ValueError(f"Could not draw distinct synonyms for {code}")
            words = [_modifier(rng) for _ in range(rng.integers(1, 3))]
            candidate = " ".join([*words, condition])
            if candidate not in variants:
                variants.append(candidate)
        phrases[code] = tuple(variants)
        entries += [DictEntry(diagnosis_text=text, icd1=code) for text in variants]

    logger.info(
        "event=synthetic_dictionary_generated codes=%s entries=%s",
        len(codes),
        len(entries),
    )
    return SyntheticDictionary(entries=tuple(entries), phrases=phrases)


def abbreviate(phrase: str) -> str:
    return "".join(f"{word[0]}." for word in phrase.split())


def misspell(phrase: str, rng: Rng) -> str:
    words = phrase.split(" ")
    candidates = [
        index for index, word in enumerate(words) if len(word) >= _MIN_MISSPELL_LENGTH
    ]
    if not candidates:
        return phrase
    index = candidates[rng.integers(0, len(candidates))]
    word = words[index]
    position = rng.integers(1, len(word))
    letters = string.ascii_lowercase
    operation = rng.integers(0, 3)
    if operation == 0:
        shift = rng.integers(1, len(letters))
        replacement = letters[(letters.find(word[position]) + shift) % len(letters)]
        word = word[:position] + replacement + word[position + 1 :]
    elif operation == 1:
        word = word[:position] + word[position + 1 :]
    else:
        word = word[:position] + letters[rng.integers(0, 26)] + word[position:]
    words[index] = word
    return " ".join(words)


def _render_fragment(phrase: str, config: SynthConfig, rng: Rng) -> str:
    misspelled = float(rng.random(())) < config.misspelling_prob
    abbreviated = float(rng.random(())) < config.abbreviation_prob
    if misspelled:
        phrase = misspell(phrase, rng)
    # Edits start at index 1; abbreviations keep only first letters.
    return abbreviate(phrase) if abbreviated else phrase


def generate_corpus(config: SynthConfig, dictionary: SyntheticDictionary) -> list[Record]:
    base = Rng(_require_seed(config)).child("corpus")
    codes = dictionary.codes
    max_codes = len(config.codes_per_line)
    if max_codes > len(codes):
        raise ValueError(f"Lines may carry {max_codes} codes but only {len(codes)} exist")

    records: list[Record] = []
    layout = base.child("certificates")
    certificate = 0
    line_id = 0
    lines_left = 0
    for number in range(config.n_lines):
        if lines_left == 0:
            certificate += 1
            line_id = 0
            lines_left = layout.integers(1, config.max_lines_per_certificate + 1)
        line_rng = base.child(f"line-{number}")
        count = 1 + line_rng.choice(max_codes, p=config.codes_per_line)
        chosen = [codes[i] for i in line_rng.permutation(len(codes))[:count]]
        fragments = []
        for code in chosen:
            bank = dictionary.phrases[code]
            phrase = bank[line_rng.integers(0, len(bank))]
            fragments.append(_render_fragment(phrase, config, line_rng))
        line_id += 1
        lines_left -= 1
        records.append(
            Record(
                doc_id=f"D{certificate:05d}",
                line_id=line_id,
                raw_text=", ".join(fragments),
                gold_codes=tuple(chosen),
            )
        )

    logger.info(
        "event=synthetic_corpus_generated lines=%s certificates=%s", len(records), certificate
    )
    return records


def expected_codes_per_line(config: SynthConfig) -> float:
    return sum(
        (count + 1) * probability
        for count, probability in enumerate(config.codes_per_line)
    )


def write_split(
    records: Sequence[Record],
    train_fraction: float,
    seed: int,
    paths: tuple[Path, Path],
) -> tuple[list[Record], list[Record]]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    order = Rng(seed).child("split").permutation(len(records))
    cut = round(len(records) * train_fraction)
    train = sorted((records[i] for i in order[:cut]), key=lambda record: record.key)
    test = sorted((records[i] for i in order[cut:]), key=lambda record: record.key)
    train_path, test_path = paths
    write_corpus(train, train_path)
    write_corpus(test, test_path)
    logger.info("event=split_written train=%s test=%s", len(train), len(test))
    return train, test

import re
from dataclasses import dataclass, field

_ICD_CODE_RE = re.compile(r"^[A-Z][0-9]{2,4}$")


@dataclass(frozen=True, order=True)
class IcdCode:
    value: str

    def __post_init__(self) -> None:
        if not _ICD_CODE_RE.fullmatch(self.value):
            raise ValueError(f"Invalid ICD-10 code: {self.value!r}")

    @classmethod
    def parse(cls, raw: str) -> "IcdCode":
        return cls(raw.strip().replace(".", ""))

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Record:
    doc_id: str
    line_id: int
    raw_text: str
    gold_codes: tuple[IcdCode, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.line_id)


@dataclass(frozen=True)
class DictEntry:
    diagnosis_text: str
    icd1: IcdCode
    icd_c: IcdCode | None = None
    icd2: IcdCode | None = None

    def __post_init__(self) -> None:
        if not self.diagnosis_text.strip():
            raise ValueError("Dictionary diagnosis text must not be empty")


@dataclass(frozen=True)
class CodeDocument:
    code: IcdCode
    text: str


@dataclass(frozen=True)
class EncodedRecord:
    token_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    truncated: bool = False


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    line_id: int
    codes: tuple[IcdCode, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.line_id)


@dataclass(frozen=True)
class MetricsReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 0.0

    @property
    def recall(self) -> float:
        expected = self.tp + self.fn
        return self.tp / expected if expected else 0.0

    @property
    def f_measure(self) -> float:
        precision = self.precision
        recall = self.recall
        if precision + recall == 0:
            return 0.0
        return 2 * precision * recall / (precision + recall)

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
        )

    def as_dict(self) -> dict[str, float | int]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
        }


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict[str, object]
    input_digests: dict[str, str]
    seed: int
    started_at: str
    finished_at: str
    outputs: list[str]
    extra: dict[str, object] = field(default_factory=dict)

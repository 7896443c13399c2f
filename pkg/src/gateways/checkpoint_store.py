# b"CRTC" | u32 version | u32 section count, then per section:
# u32 name length | utf-8 name | u64 payload length | payload (little endian).
# Array payloads are u8 dtype code | u32 ndim | u64 dims... | raw bytes.

import json
import logging
import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy.sparse import csr_matrix

from ..config import ModelConfig
from ..errors import CheckpointError
from ..models import IcdCode
from ..services.corpus import CodeVocab, Vocab
from ..services.model import LstmCellParams, Seq2SeqModel
from ..services.prior import TfIdfIndex
from .manifest_store import write_atomic

logger = logging.getLogger(__name__)

MAGIC = b"CRTC"
FORMAT_VERSION = 1

_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_DTYPE_CODES = {dtype: code for code, dtype in _DTYPES.items()}
_PARAM_PREFIX = "param."


def _json_bytes(value: object) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _array_bytes(array: np.ndarray) -> bytes:
    if array.dtype.kind == "f":
        dtype = np.dtype("<f8")
    elif array.dtype.kind in "iu":
        dtype = np.dtype("<i8")
    else:
        raise CheckpointError(f"Unsupported array dtype {array.dtype}")
    data = np.ascontiguousarray(array, dtype=dtype)
    header = struct.pack("<BI", _DTYPE_CODES[dtype], data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    return header + data.tobytes(order="C")


def _model_sections(model: Seq2SeqModel) -> list[tuple[str, bytes]]:
    sections = [
        ("config", _json_bytes(model.config.model_dump(mode="json"))),
        ("metadata", _json_bytes(model.metadata)),
        ("vocab", _json_bytes(list(model.vocab.id_to_token))),
        ("code_vocab", _json_bytes([code.value for code in model.code_vocab.codes])),
    ]
    index = model.index
    if index is not None:
        terms = sorted(index.term_to_id, key=index.term_to_id.__getitem__)
        sections += [
            ("index.codes", _json_bytes([code.value for code in index.code_order])),
            ("index.terms", _json_bytes(terms)),
            ("index.idf", _array_bytes(index.idf)),
            ("index.data", _array_bytes(index.doc_matrix.data)),
            ("index.indices", _array_bytes(index.doc_matrix.indices)),
            ("index.indptr", _array_bytes(index.doc_matrix.indptr)),
        ]
    sections += [
        (_PARAM_PREFIX + name, _array_bytes(value))
        for name, value in model.parameters().items()
    ]
    return sections


def save_checkpoint(model: Seq2SeqModel, path: Path) -> int:
    sections = _model_sections(model)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(sections))]
    for name, payload in sections:
        encoded = name.encode("utf-8")
        chunks += [struct.pack("<I", len(encoded)), encoded, struct.pack("<Q", len(payload)), payload]
    data = b"".join(chunks)
    write_atomic(path, data)
    logger.info("event=checkpoint_saved path=%s bytes=%s", path, len(data))
    return len(data)


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self._data = data
        self._offset = 0
        self._path = path

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._data)

    def take(self, size: int) -> bytes:
        if self._offset + size > len(self._data):
            raise CheckpointError(f"Checkpoint {self._path} is truncated")
        chunk = self._data[self._offset : self._offset + size]
        self._offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_sections(data: bytes, path: Path) -> dict[str, bytes]:
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, count = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has format version {version}; expected {FORMAT_VERSION}"
        )
    sections: dict[str, bytes] = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<I")
        try:
            name = reader.take(name_length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"Checkpoint {path} has a corrupt section name") from exc
        (payload_length,) = reader.unpack("<Q")
        sections[name] = reader.take(payload_length)
    if not reader.exhausted:
        raise CheckpointError(f"Checkpoint {path} has trailing bytes")
    return sections


def _parse_array(payload: bytes, name: str, path: Path) -> np.ndarray:
    reader = _Reader(payload, path)
    code, ndim = reader.unpack("<BI")
    dtype = _DTYPES.get(code)
    if dtype is None:
        raise CheckpointError(f"Section {name} in {path} has unknown dtype code {code}")
    shape = reader.unpack(f"<{ndim}Q")
    size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    array = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape)
    if not reader.exhausted:
        raise CheckpointError(f"Section {name} in {path} has trailing bytes")
    return array.astype(dtype.newbyteorder("="), copy=True)


def load_checkpoint(path: Path) -> Seq2SeqModel:
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    sections = _read_sections(path.read_bytes(), path)

    def section(name: str) -> bytes:
        try:
            return sections[name]
        except KeyError:
            raise CheckpointError(f"Checkpoint {path} lacks section {name!r}") from None

    def array(name: str) -> np.ndarray:
        return _parse_array(section(name), name, path)

    def parsed(name: str) -> object:
        return json.loads(section(name).decode("utf-8"))

    try:
        config = ModelConfig(**parsed("config"))
        vocab = Vocab(tuple(parsed("vocab")))
        code_vocab = CodeVocab(tuple(IcdCode(value) for value in parsed("code_vocab")))
        index = None
        if "index.codes" in sections:
            codes = tuple(IcdCode(value) for value in parsed("index.codes"))
            terms = parsed("index.terms")
            index = TfIdfIndex(
                term_to_id={term: column for column, term in enumerate(terms)},
                idf=array("index.idf"),
                doc_matrix=csr_matrix(
                    (array("index.data"), array("index.indices"), array("index.indptr")),
                    shape=(len(codes), len(terms)),
                ),
                code_order=codes,
            )

        def cell(prefix: str) -> LstmCellParams:
            return LstmCellParams(
                W_x=array(f"{_PARAM_PREFIX}{prefix}.W_x"),
                W_h=array(f"{_PARAM_PREFIX}{prefix}.W_h"),
                b=array(f"{_PARAM_PREFIX}{prefix}.b"),
            )

        model = Seq2SeqModel(
            config=config,
            vocab=vocab,
            code_vocab=code_vocab,
            index=index,
            embedding=array(_PARAM_PREFIX + "embedding"),
            enc_fwd=cell("enc_fwd"),
            enc_bwd=cell("enc_bwd"),
            dec=cell("dec"),
            W_out=array(_PARAM_PREFIX + "W_out"),
            b_out=array(_PARAM_PREFIX + "b_out"),
            metadata=dict(parsed("metadata")),
        )
    except (ValueError, TypeError, ValidationError) as exc:
        raise CheckpointError(f"Checkpoint {path} is inconsistent: {exc}") from exc

    logger.info("event=checkpoint_loaded path=%s sections=%s", path, len(sections))
    return model

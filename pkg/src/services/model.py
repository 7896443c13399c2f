import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..config import ModelConfig
from ..models import EncodedRecord, Record
from .corpus import EOS, CodeVocab, Vocab, encode_record
from .embeddings import EmbeddingMatrix, lookup, lookup_backward
from .prior import TfIdfIndex, prior_matrix
from .tensor import (
    DTYPE,
    Rng,
    batch_softmax_cross_entropy,
    check_finite,
    concat,
    concat_backward,
    dropout,
    dropout_backward,
    sigmoid,
    sigmoid_backward,
    tanh,
    tanh_backward,
)

logger = logging.getLogger(__name__)

Gradients = dict[str, np.ndarray]


def _glorot(rng: Rng, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_out, fan_in))


@dataclass
class LstmCellParams:
    # Gate blocks: input, forget, candidate, output.
    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        hidden = self.W_h.shape[1]
        if self.W_h.shape != (4 * hidden, hidden):
            raise ValueError(f"W_h must be [4H x H], got {self.W_h.shape}")
        if self.W_x.ndim != 2 or self.W_x.shape[0] != 4 * hidden:
            raise ValueError(f"W_x must be [4H x D_in], got {self.W_x.shape}")
        if self.b.shape != (4 * hidden,):
            raise ValueError(f"b must be [4H], got {self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.W_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, rng: Rng) -> "LstmCellParams":
        b = np.zeros(4 * hidden, dtype=DTYPE)
        b[hidden : 2 * hidden] = 1.0
        return cls(
            W_x=_glorot(rng, 4 * hidden, input_dim),
            W_h=_glorot(rng, 4 * hidden, hidden),
            b=b,
        )

    def named(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.W_x": self.W_x, f"{prefix}.W_h": self.W_h, f"{prefix}.b": self.b}


@dataclass(frozen=True)
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


def lstm_step(
    x: np.ndarray, h: np.ndarray, c: np.ndarray, p: LstmCellParams
) -> tuple[np.ndarray, np.ndarray, LstmStepCache]:
    H = p.hidden
    if x.shape[-1] != p.input_dim or h.shape[-1] != H or c.shape != h.shape:
        raise ValueError(
            f"lstm_step shape mismatch: x {x.shape}, h {h.shape}, c {c.shape} "
            f"for D_in={p.input_dim}, H={H}"
        )
    z = x @ p.W_x.T + h @ p.W_h.T + p.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    g = tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H :])
    c_next = f * c + i * g
    tanh_c = tanh(c_next)
    h_next = o * tanh_c
    return h_next, c_next, LstmStepCache(x, h, c, i, f, g, o, tanh_c)


def lstm_step_backward(
    dh_next: np.ndarray,
    dc_next: np.ndarray,
    cache: LstmStepCache,
    p: LstmCellParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, LstmCellParams]:
    dc = dc_next + tanh_backward(dh_next * cache.o, cache.tanh_c)
    dz = np.concatenate(
        [
            sigmoid_backward(dc * cache.g, cache.i),
            sigmoid_backward(dc * cache.c_prev, cache.f),
            tanh_backward(dc * cache.i, cache.g),
            sigmoid_backward(dh_next * cache.tanh_c, cache.o),
        ],
        axis=-1,
    )
    dz_rows = dz.reshape(-1, 4 * p.hidden)
    grads = LstmCellParams(
        W_x=dz_rows.T @ cache.x.reshape(-1, p.input_dim),
        W_h=dz_rows.T @ cache.h_prev.reshape(-1, p.hidden),
        b=dz_rows.sum(axis=0),
    )
    return dz @ p.W_x, dz @ p.W_h, dc * cache.f, grads


def _accumulate(total: LstmCellParams | None, step: LstmCellParams) -> LstmCellParams:
    if total is None:
        return step
    total.W_x += step.W_x
    total.W_h += step.W_h
    total.b += step.b
    return total


@dataclass
class Seq2SeqModel:
    config: ModelConfig
    vocab: Vocab
    code_vocab: CodeVocab
    index: TfIdfIndex | None
    embedding: np.ndarray
    enc_fwd: LstmCellParams
    enc_bwd: LstmCellParams
    dec: LstmCellParams
    W_out: np.ndarray
    b_out: np.ndarray
    metadata: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        config = self.config
        if self.index is not None and not config.use_prior:
            raise ValueError("A prior index is attached but use_prior is off")
        if self.embedding.shape != (len(self.vocab), config.embedding_dim):
            raise ValueError(
                f"Embedding matrix {self.embedding.shape} does not match "
                f"vocab {len(self.vocab)} x d={config.embedding_dim}"
            )
        for name, cell, input_dim, hidden in (
            ("enc_fwd", self.enc_fwd, config.embedding_dim, config.enc_hidden),
            ("enc_bwd", self.enc_bwd, config.embedding_dim, config.enc_hidden),
            ("dec", self.dec, self.context_dim, config.dec_hidden),
        ):
            if (cell.input_dim, cell.hidden) != (input_dim, hidden):
                raise ValueError(
                    f"{name} cell is D_in={cell.input_dim}, H={cell.hidden}; "
                    f"expected D_in={input_dim}, H={hidden}"
                )
        if self.W_out.shape != (len(self.code_vocab), config.dec_hidden):
            raise ValueError(f"W_out shape {self.W_out.shape} is inconsistent")
        if self.b_out.shape != (len(self.code_vocab),):
            raise ValueError(f"b_out shape {self.b_out.shape} is inconsistent")
        for name, value in self.parameters().items():
            check_finite(value, name)

    @classmethod
    def initialize(
        cls,
        config: ModelConfig,
        vocab: Vocab,
        code_vocab: CodeVocab,
        index: TfIdfIndex | None,
        embeddings: EmbeddingMatrix,
        rng: Rng,
    ) -> "Seq2SeqModel":
        attached = index if config.use_prior else None
        prior_dim = attached.dimension if attached is not None else 0
        context_dim = 2 * config.enc_hidden + prior_dim
        return cls(
            config=config,
            vocab=vocab,
            code_vocab=code_vocab,
            index=attached,
            embedding=embeddings.matrix.copy(),
            enc_fwd=LstmCellParams.initialize(config.embedding_dim, config.enc_hidden, rng),
            enc_bwd=LstmCellParams.initialize(config.embedding_dim, config.enc_hidden, rng),
            dec=LstmCellParams.initialize(context_dim, config.dec_hidden, rng),
            W_out=_glorot(rng, len(code_vocab), config.dec_hidden),
            b_out=np.zeros(len(code_vocab), dtype=DTYPE),
        )

    @property
    def prior_dim(self) -> int:
        return self.index.dimension if self.index is not None else 0

    @property
    def context_dim(self) -> int:
        return 2 * self.config.enc_hidden + self.prior_dim

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "embedding": self.embedding,
            **self.enc_fwd.named("enc_fwd"),
            **self.enc_bwd.named("enc_bwd"),
            **self.dec.named("dec"),
            "W_out": self.W_out,
            "b_out": self.b_out,
        }

    def prior_vectors(self, texts: Sequence[str]) -> np.ndarray:
        return prior_matrix(self.index, texts)


@dataclass(frozen=True)
class EncoderCache:
    token_ids: np.ndarray
    input_mask: np.ndarray | None
    forward_steps: list[LstmStepCache]
    backward_steps: list[LstmStepCache]


def _run_chain(
    inputs: np.ndarray, cell: LstmCellParams, positions: Sequence[int]
) -> tuple[np.ndarray, list[LstmStepCache]]:
    batch_shape = inputs.shape[:-2]
    h = np.zeros(batch_shape + (cell.hidden,), dtype=DTYPE)
    c = np.zeros_like(h)
    caches = []
    for t in positions:
        h, c, cache = lstm_step(inputs[..., t, :], h, c, cell)
        caches.append(cache)
    return h, caches


def encode(
    model: Seq2SeqModel,
    token_ids: np.ndarray,
    training: bool = False,
    rng: Rng | None = None,
) -> tuple[np.ndarray, EncoderCache]:
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if token_ids.shape[-1] < 1:
        raise ValueError("encode needs at least one position")
    embedded, mask = dropout(
        lookup(model.embedding, token_ids), model.config.dropout, rng, training
    )
    steps = token_ids.shape[-1]
    h_fwd, fwd_caches = _run_chain(embedded, model.enc_fwd, range(steps))
    h_bwd, bwd_caches = _run_chain(embedded, model.enc_bwd, range(steps - 1, -1, -1))
    return concat(h_fwd, h_bwd), EncoderCache(token_ids, mask, fwd_caches, bwd_caches)


def encode_backward(
    model: Seq2SeqModel, d_enc: np.ndarray, cache: EncoderCache
) -> Gradients:
    H = model.config.enc_hidden
    steps = cache.token_ids.shape[-1]
    d_embedded = np.zeros(
        cache.token_ids.shape + (model.config.embedding_dim,), dtype=DTYPE
    )
    grads: Gradients = {}
    for name, cell, d_h, caches, positions in (
        ("enc_fwd", model.enc_fwd, d_enc[..., :H], cache.forward_steps, range(steps)),
        (
            "enc_bwd",
            model.enc_bwd,
            d_enc[..., H:],
            cache.backward_steps,
            range(steps - 1, -1, -1),
        ),
    ):
        d_c = np.zeros_like(d_h)
        total: LstmCellParams | None = None
        for t, step_cache in reversed(list(zip(positions, caches, strict=True))):
            d_x, d_h, d_c, step_grads = lstm_step_backward(d_h, d_c, step_cache, cell)
            d_embedded[..., t, :] += d_x
            total = _accumulate(total, step_grads)
        grads.update(total.named(name))

    d_embedded = dropout_backward(d_embedded, cache.input_mask)
    grads["embedding"] = lookup_backward(d_embedded, cache.token_ids, len(model.vocab))
    return grads


def join_context(
    model: Seq2SeqModel,
    enc_state: np.ndarray,
    prior: np.ndarray,
    training: bool = False,
    rng: Rng | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    if prior.shape[-1] != model.prior_dim:
        raise ValueError(
            f"Prior width {prior.shape[-1]} does not match model |C|={model.prior_dim}"
        )
    enc_dropped, mask = dropout(enc_state, model.config.dropout, rng, training)
    return concat(enc_dropped, prior), mask


def build_context(
    model: Seq2SeqModel,
    enc_state: np.ndarray,
    raw_text: str,
    training: bool = False,
    rng: Rng | None = None,
) -> np.ndarray:
    prior = model.prior_vectors([raw_text])[0]
    context, _ = join_context(model, enc_state, prior, training, rng)
    return context


@dataclass(frozen=True)
class DecoderCache:
    context: np.ndarray
    hidden: np.ndarray
    steps: list[LstmStepCache]


def decode(
    model: Seq2SeqModel, context: np.ndarray
) -> tuple[np.ndarray, DecoderCache]:
    if context.shape[-1] != model.context_dim:
        raise ValueError(
            f"Context width {context.shape[-1]} does not match D_ctx={model.context_dim}"
        )
    h = np.zeros(context.shape[:-1] + (model.config.dec_hidden,), dtype=DTYPE)
    c = np.zeros_like(h)
    hidden_states = []
    caches = []
    for _ in range(model.config.max_out):
        h, c, cache = lstm_step(context, h, c, model.dec)
        hidden_states.append(h)
        caches.append(cache)
    hidden = np.stack(hidden_states, axis=-2)
    logits = hidden @ model.W_out.T + model.b_out
    return check_finite(logits, "decoder logits"), DecoderCache(context, hidden, caches)


def decode_backward(
    model: Seq2SeqModel, d_logits: np.ndarray, cache: DecoderCache
) -> tuple[np.ndarray, Gradients]:
    V = len(model.code_vocab)
    H = model.config.dec_hidden
    d_rows = d_logits.reshape(-1, V)
    grads: Gradients = {
        "W_out": d_rows.T @ cache.hidden.reshape(-1, H),
        "b_out": d_rows.sum(axis=0),
    }
    d_hidden = d_logits @ model.W_out
    d_context = np.zeros_like(cache.context)
    d_h = np.zeros(cache.context.shape[:-1] + (H,), dtype=DTYPE)
    d_c = np.zeros_like(d_h)
    total: LstmCellParams | None = None
    for t in reversed(range(len(cache.steps))):
        d_x, d_h, d_c, step_grads = lstm_step_backward(
            d_hidden[..., t, :] + d_h, d_c, cache.steps[t], model.dec
        )
        d_context += d_x
        total = _accumulate(total, step_grads)
    grads.update(total.named("dec"))
    return d_context, grads


def step_mask(target_ids: np.ndarray) -> np.ndarray:
    is_eos = target_ids == EOS
    if not np.all(is_eos.any(axis=-1)):
        raise ValueError("Every target sequence needs an EOS")
    eos_position = is_eos.argmax(axis=-1)
    steps = np.arange(target_ids.shape[-1])
    return (steps <= eos_position[..., np.newaxis]).astype(DTYPE)


def predict_logits(
    model: Seq2SeqModel, token_ids: np.ndarray, priors: np.ndarray
) -> np.ndarray:
    enc_state, _ = encode(model, token_ids)
    context, _ = join_context(model, enc_state, priors)
    logits, _ = decode(model, context)
    return logits


def batch_forward_loss(
    model: Seq2SeqModel,
    token_ids: np.ndarray,
    target_ids: np.ndarray,
    priors: np.ndarray,
    training: bool = False,
    rng: Rng | None = None,
) -> tuple[float, Gradients]:
    enc_state, enc_cache = encode(model, token_ids, training, rng)
    context, context_mask = join_context(model, enc_state, priors, training, rng)
    logits, dec_cache = decode(model, context)

    n_records, n_steps, n_codes = logits.shape
    mask = step_mask(target_ids)
    weights = mask / mask.sum(axis=-1, keepdims=True) / n_records
    losses, d_rows = batch_softmax_cross_entropy(
        logits.reshape(-1, n_codes), target_ids.reshape(-1)
    )
    loss = float(np.sum(weights.reshape(-1) * losses))
    d_logits = (d_rows * weights.reshape(-1, 1)).reshape(n_records, n_steps, n_codes)

    d_context, grads = decode_backward(model, d_logits, dec_cache)
    d_enc, _ = concat_backward(d_context, 2 * model.config.enc_hidden)
    grads.update(encode_backward(model, dropout_backward(d_enc, context_mask), enc_cache))
    for name, grad in grads.items():
        check_finite(grad, f"gradient of {name}")
    return loss, grads


def forward_loss(
    model: Seq2SeqModel,
    encoded: EncodedRecord,
    raw_text: str,
    training: bool = False,
    rng: Rng | None = None,
) -> tuple[float, Gradients]:
    return batch_forward_loss(
        model,
        np.array([encoded.token_ids], dtype=np.int64),
        np.array([encoded.target_ids], dtype=np.int64),
        model.prior_vectors([raw_text]),
        training,
        rng,
    )


@dataclass(frozen=True)
class EncodedBatch:
    token_ids: np.ndarray
    target_ids: np.ndarray
    priors: np.ndarray
    truncated: int = 0

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    def take(self, rows: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(
            token_ids=self.token_ids[rows],
            target_ids=self.target_ids[rows],
            priors=self.priors[rows],
        )


def encode_records(model: Seq2SeqModel, records: Sequence[Record]) -> EncodedBatch:
    config = model.config
    encoded = [
        encode_record(record, model.vocab, model.code_vocab, config.max_in, config.max_out)
        for record in records
    ]
    truncated = sum(item.truncated for item in encoded)
    if truncated:
        logger.info("event=records_truncated count=%s total=%s", truncated, len(records))
    unseen = sum(
        any(code not in model.code_vocab for code in record.gold_codes) for record in records
    )
    if unseen:
        logger.warning(
            "event=records_unseen_codes count=%s total=%s", unseen, len(records)
        )
    return EncodedBatch(
        token_ids=np.array(
            [item.token_ids for item in encoded], dtype=np.int64
        ).reshape(len(records), config.max_in),
        target_ids=np.array(
            [item.target_ids for item in encoded], dtype=np.int64
        ).reshape(len(records), config.max_out),
        priors=model.prior_vectors([record.raw_text for record in records]).reshape(
            len(records), model.prior_dim
        ),
        truncated=truncated,
    )

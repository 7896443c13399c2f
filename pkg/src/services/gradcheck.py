import logging
from collections.abc import Callable
from dataclasses import dataclass, fields

import numpy as np

from ..config import ModelConfig
from ..models import CodeDocument, IcdCode
from .corpus import EOS, PAD, PAD_TOKEN, UNK_TOKEN, CodeVocab, Vocab
from .embeddings import OOV_BOUND, EmbeddingMatrix
from .model import (
    LstmCellParams,
    Seq2SeqModel,
    batch_forward_loss,
    decode,
    decode_backward,
    encode,
    encode_backward,
    lstm_step,
    lstm_step_backward,
)
from .prior import fit_tfidf
from .tensor import (
    Rng,
    concat,
    concat_backward,
    dropout,
    dropout_backward,
    grad_check,
    matmul,
    matmul_backward,
    sigmoid,
    sigmoid_backward,
    softmax_cross_entropy,
    tanh,
    tanh_backward,
)

logger = logging.getLogger(__name__)

PRIMITIVE_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5
# Composite checks compare small coordinates on an absolute scale of 1e-4.
MODEL_ERROR_FLOOR = 1e-4

_TOY_TOKENS = ("aortic", "cardiac", "renal", "septic", "arrest", "failure", "stenosis")


@dataclass(frozen=True)
class GradCheckSizes:
    enc_hidden: int = 3
    dec_hidden: int = 4
    embedding_dim: int = 5
    codes: int = 3
    steps: int = 3
    max_out: int = 3
    batch: int = 2

    def __post_init__(self) -> None:
        for item in fields(self):
            if getattr(self, item.name) < 1:
                raise ValueError(f"{item.name} must be positive")
        if self.max_out < 2:
            raise ValueError("max_out must be at least 2")
        if self.codes > len(_TOY_TOKENS):
            raise ValueError(f"codes must be at most {len(_TOY_TOKENS)}")

    @classmethod
    def parse(cls, text: str) -> "GradCheckSizes":
        known = {item.name for item in fields(cls)}
        values: dict[str, int] = {}
        for pair in filter(None, (part.strip() for part in text.split(","))):
            key, separator, raw = pair.partition("=")
            key = key.strip()
            if not separator or key not in known:
                raise ValueError(f"Unknown size {pair!r}; expected one of {sorted(known)}")
            try:
                values[key] = int(raw)
            except ValueError as exc:
                raise ValueError(f"Size {key} must be an integer, got {raw!r}") from exc
        return cls(**values)


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weights(rng: Rng, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(0.5, 1.5, shape)


def _check_matmul(rng: Rng, sizes: GradCheckSizes) -> float:
    a = rng.uniform(0.5, 1.5, (sizes.batch, sizes.embedding_dim))
    b = rng.uniform(0.5, 1.5, (sizes.embedding_dim, sizes.enc_hidden))
    w = _weights(rng, (sizes.batch, sizes.enc_hidden))

    def f():
        return float(np.sum(w * matmul(a, b))), matmul_backward(w, a, b)

    return grad_check(f, [a, b])


def _check_sigmoid(rng: Rng, sizes: GradCheckSizes) -> float:
    x = rng.uniform(-2.0, 2.0, (sizes.batch, sizes.enc_hidden))
    w = _weights(rng, x.shape)

    def f():
        y = sigmoid(x)
        return float(np.sum(w * y)), [sigmoid_backward(w, y)]

    return grad_check(f, [x])


def _check_tanh(rng: Rng, sizes: GradCheckSizes) -> float:
    x = rng.uniform(-1.5, 1.5, (sizes.batch, sizes.enc_hidden))
    w = _weights(rng, x.shape)

    def f():
        y = tanh(x)
        return float(np.sum(w * y)), [tanh_backward(w, y)]

    return grad_check(f, [x])


def _check_softmax_cross_entropy(rng: Rng, sizes: GradCheckSizes) -> float:
    logits = rng.uniform(-2.0, 2.0, (sizes.codes + 2,))
    target = rng.integers(0, sizes.codes + 2)

    def f():
        loss, dlogits = softmax_cross_entropy(logits, target)
        return loss, [dlogits]

    return grad_check(f, [logits])


def _check_dropout(rng: Rng, sizes: GradCheckSizes) -> float:
    x = rng.uniform(0.5, 1.5, (sizes.batch, sizes.enc_hidden))
    w = _weights(rng, x.shape)
    mask_seed = rng.integers(0, 1 << 62)

    def f():
        y, mask = dropout(x, 0.5, Rng(mask_seed), training=True)
        return float(np.sum(w * y)), [dropout_backward(w, mask)]

    return grad_check(f, [x])


def _check_concat(rng: Rng, sizes: GradCheckSizes) -> float:
    a = rng.uniform(-1.0, 1.0, (sizes.enc_hidden,))
    b = rng.uniform(-1.0, 1.0, (sizes.codes,))
    w = _weights(rng, (sizes.enc_hidden + sizes.codes,))

    def f():
        return float(np.sum(w * concat(a, b))), list(concat_backward(w, a.shape[0]))

    return grad_check(f, [a, b])


def _check_lstm_step(rng: Rng, sizes: GradCheckSizes) -> float:
    hidden = sizes.enc_hidden
    cell = LstmCellParams.initialize(sizes.embedding_dim, hidden, rng)
    cell.b += rng.uniform(-0.1, 0.1, cell.b.shape)
    x = rng.uniform(-1.0, 1.0, (sizes.batch, sizes.embedding_dim))
    h = rng.uniform(-1.0, 1.0, (sizes.batch, hidden))
    c = rng.uniform(-1.0, 1.0, (sizes.batch, hidden))
    w_h = _weights(rng, h.shape)
    w_c = _weights(rng, c.shape)

    def f():
        h_next, c_next, cache = lstm_step(x, h, c, cell)
        dx, dh, dc, grads = lstm_step_backward(w_h, w_c, cache, cell)
        loss = float(np.sum(w_h * h_next) + np.sum(w_c * c_next))
        return loss, [dx, dh, dc, grads.W_x, grads.W_h, grads.b]

    return grad_check(f, [x, h, c, cell.W_x, cell.W_h, cell.b], floor=MODEL_ERROR_FLOOR)


def toy_model(
    sizes: GradCheckSizes, rng: Rng, dropout_rate: float = 0.0, use_prior: bool = True
) -> Seq2SeqModel:
    vocab = Vocab((PAD_TOKEN, UNK_TOKEN, *_TOY_TOKENS))
    codes = tuple(IcdCode(f"T{100 + number}") for number in range(sizes.codes))
    documents = [
        CodeDocument(
            code=code,
            text=f"{_TOY_TOKENS[number]} {_TOY_TOKENS[(number + 1) % len(_TOY_TOKENS)]}",
        )
        for number, code in enumerate(codes)
    ]
    config = ModelConfig(
        enc_hidden=sizes.enc_hidden,
        dec_hidden=sizes.dec_hidden,
        embedding_dim=sizes.embedding_dim,
        max_in=sizes.steps,
        max_out=sizes.max_out,
        dropout=dropout_rate,
        use_prior=use_prior,
    )
    embeddings = EmbeddingMatrix(
        matrix=rng.uniform(-OOV_BOUND, OOV_BOUND, (len(vocab), sizes.embedding_dim)),
        dim=sizes.embedding_dim,
        coverage=0.0,
    )
    model = Seq2SeqModel.initialize(
        config,
        vocab,
        CodeVocab(codes),
        fit_tfidf(documents) if use_prior else None,
        embeddings,
        rng.child("weights"),
    )
    for bias in (model.enc_fwd.b, model.enc_bwd.b, model.dec.b, model.b_out):
        bias += rng.uniform(-0.1, 0.1, bias.shape)
    return model


def toy_batch(
    model: Seq2SeqModel, sizes: GradCheckSizes, rng: Rng
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    token_ids = np.array(
        [[rng.integers(0, len(model.vocab)) for _ in range(sizes.steps)] for _ in range(sizes.batch)],
        dtype=np.int64,
    )
    targets = []
    for _ in range(sizes.batch):
        count = rng.integers(0, sizes.max_out)
        row = [rng.integers(2, len(model.code_vocab)) for _ in range(count)] + [EOS]
        targets.append(row + [PAD] * (sizes.max_out - len(row)))
    texts = [
        " ".join(model.vocab.id_to_token[token] for token in row if token >= 2)
        for row in token_ids
    ]
    return token_ids, np.array(targets, dtype=np.int64), model.prior_vectors(texts)


def _check_encode(rng: Rng, sizes: GradCheckSizes) -> float:
    model = toy_model(sizes, rng)
    token_ids, _, _ = toy_batch(model, sizes, rng)
    w = _weights(rng, (sizes.batch, 2 * sizes.enc_hidden))
    names = [name for name in model.parameters() if name == "embedding" or name.startswith("enc_")]

    def f():
        enc_state, cache = encode(model, token_ids)
        grads = encode_backward(model, w, cache)
        return float(np.sum(w * enc_state)), [grads[name] for name in names]

    params = model.parameters()
    return grad_check(f, [params[name] for name in names], floor=MODEL_ERROR_FLOOR)


def _check_decode(rng: Rng, sizes: GradCheckSizes) -> float:
    model = toy_model(sizes, rng)
    context = rng.uniform(-1.0, 1.0, (sizes.batch, model.context_dim))
    w = _weights(rng, (sizes.batch, sizes.max_out, len(model.code_vocab)))
    names = ["dec.W_x", "dec.W_h", "dec.b", "W_out", "b_out"]

    def f():
        logits, cache = decode(model, context)
        d_context, grads = decode_backward(model, w, cache)
        return float(np.sum(w * logits)), [d_context, *(grads[name] for name in names)]

    params = model.parameters()
    return grad_check(
        f, [context, *(params[name] for name in names)], floor=MODEL_ERROR_FLOOR
    )


def _full_model_check(dropout_rate: float, use_prior: bool) -> Callable[[Rng, GradCheckSizes], float]:
    def check(rng: Rng, sizes: GradCheckSizes) -> float:
        model = toy_model(sizes, rng, dropout_rate=dropout_rate, use_prior=use_prior)
        token_ids, target_ids, priors = toy_batch(model, sizes, rng)
        training = dropout_rate > 0.0
        mask_seed = rng.integers(0, 1 << 62)
        params = model.parameters()
        names = list(params)

        def f():
            loss, grads = batch_forward_loss(
                model, token_ids, target_ids, priors, training, Rng(mask_seed)
            )
            return loss, [grads[name] for name in names]

        return grad_check(f, [params[name] for name in names], floor=MODEL_ERROR_FLOOR)

    return check


CHECKS: tuple[tuple[str, Callable[[Rng, GradCheckSizes], float], float], ...] = (
    ("matmul", _check_matmul, PRIMITIVE_TOLERANCE),
    ("sigmoid", _check_sigmoid, PRIMITIVE_TOLERANCE),
    ("tanh", _check_tanh, PRIMITIVE_TOLERANCE),
    ("softmax_cross_entropy", _check_softmax_cross_entropy, PRIMITIVE_TOLERANCE),
    ("dropout", _check_dropout, PRIMITIVE_TOLERANCE),
    ("concat", _check_concat, PRIMITIVE_TOLERANCE),
    ("lstm_step", _check_lstm_step, PRIMITIVE_TOLERANCE),
    ("encode", _check_encode, PRIMITIVE_TOLERANCE),
    ("decode", _check_decode, PRIMITIVE_TOLERANCE),
    ("forward_loss", _full_model_check(0.0, True), MODEL_TOLERANCE),
    ("forward_loss dropout", _full_model_check(0.5, True), MODEL_TOLERANCE),
    ("forward_loss no prior", _full_model_check(0.0, False), MODEL_TOLERANCE),
)

# Per-check draw limits; other checks use every seed.
DRAW_CAPS = {"forward_loss dropout": 5, "forward_loss no prior": 5}


def run_gradcheck_suite(
    seeds: int = 20, sizes: GradCheckSizes | None = None, seed: int = 0
) -> list[GradCheckResult]:
    if seeds < 1:
        raise ValueError("The gradient check suite needs at least one seed")
    sizes = sizes or GradCheckSizes()
    base = Rng(seed)
    results = []
    for name, check, tolerance in CHECKS:
        draws = min(seeds, DRAW_CAPS.get(name, seeds))
        error = max(check(base.child(f"{name}/{draw}"), sizes) for draw in range(draws))
        result = GradCheckResult(name=name, error=error, tolerance=tolerance)
        logger.info(
            "event=gradcheck_completed check=%s max_error=%.3e passed=%s",
            name,
            error,
            result.passed,
        )
        results.append(result)
    return results

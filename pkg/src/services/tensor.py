import logging
from collections.abc import Callable, Sequence

import numpy as np
from scipy.special import expit, log_softmax

from ..errors import NumericalError
from ..utils.ids import MASK64, derive_seed, splitmix64

logger = logging.getLogger(__name__)

DTYPE = np.float64


class Rng:
    def __init__(self, seed: int) -> None:
        self.seed = seed & MASK64
        self._generator = np.random.Generator(np.random.PCG64(splitmix64(self.seed)))

    def child(self, label: str) -> "Rng":
        return Rng(derive_seed(self.seed, label))

    def random(self, shape: int | tuple[int, ...]) -> np.ndarray:
        return self._generator.random(shape, dtype=DTYPE)

    def uniform(
        self, low: float, high: float, shape: int | tuple[int, ...]
    ) -> np.ndarray:
        return self._generator.uniform(low, high, shape)

    def integers(self, low: int, high: int) -> int:
        return int(self._generator.integers(low, high))

    def choice(self, n: int, p: Sequence[float] | None = None) -> int:
        return int(self._generator.choice(n, p=p))

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)


def tensor(values: object) -> np.ndarray:
    return np.array(values, dtype=DTYPE)


def check_finite(array: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Non-finite values in {name}")
    return array


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul output")


def matmul_backward(
    dc: np.ndarray, a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    return dc @ b.T, a.T @ dc


def sigmoid(x: np.ndarray) -> np.ndarray:
    return check_finite(expit(x), "sigmoid output")


def sigmoid_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    return check_finite(np.tanh(x), "tanh output")


def tanh_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits, axis=-1))


def softmax_cross_entropy(
    logits: np.ndarray, target_id: int
) -> tuple[float, np.ndarray]:
    if logits.ndim != 1:
        raise ValueError(f"Expected a logit vector, got shape {logits.shape}")
    if not 0 <= target_id < logits.shape[0]:
        raise ValueError(
            f"Target id {target_id} outside [0, {logits.shape[0]})"
        )
    losses, dlogits = batch_softmax_cross_entropy(
        logits[np.newaxis, :], np.array([target_id])
    )
    return float(losses[0]), dlogits[0]


def batch_softmax_cross_entropy(
    logits: np.ndarray, target_ids: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    check_finite(logits, "logits")
    log_probs = log_softmax(logits, axis=-1)
    rows = np.arange(logits.shape[0])
    losses = -log_probs[rows, target_ids]
    dlogits = np.exp(log_probs)
    dlogits[rows, target_ids] -= 1.0
    return losses, dlogits


def dropout(
    x: np.ndarray, rate: float, rng: Rng | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"Dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("Training-mode dropout needs an Rng")
    mask = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a, b], axis=-1)


def concat_backward(dc: np.ndarray, split: int) -> tuple[np.ndarray, np.ndarray]:
    return dc[..., :split], dc[..., split:]


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    f: Callable[[], tuple[float, Sequence[np.ndarray]]],
    params: Sequence[np.ndarray],
    eps: float = 1e-5,
    floor: float = 1e-8,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` reads ``params`` in place and returns ``(loss, grads)`` with one
    gradient per parameter. Each coordinate is perturbed by ``±eps`` and
    restored afterwards.
    """
    _, analytic = f()
    analytic = [np.array(grad, dtype=DTYPE, copy=True) for grad in analytic]
    if len(analytic) != len(params):
        raise ValueError("grad_check needs one gradient per parameter")

    worst = 0.0
    for param, grad in zip(params, analytic, strict=True):
        if grad.shape != param.shape:
            raise ValueError(
                f"Gradient shape {grad.shape} does not mirror parameter {param.shape}"
            )
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + eps
            plus, _ = f()
            param[index] = original - eps
            minus, _ = f()
            param[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, relative_error(float(grad[index]), numeric, floor))

    logger.debug("event=grad_check_completed worst_relative_error=%.3e", worst)
    return worst

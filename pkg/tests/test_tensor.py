import math
import unittest

import numpy as np

from src.errors import NumericalError
from src.services.tensor import (
    Rng,
    batch_softmax_cross_entropy,
    check_finite,
    concat,
    concat_backward,
    dropout,
    dropout_backward,
    grad_check,
    matmul,
    relative_error,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
    tensor,
)
from src.utils.ids import derive_seed, splitmix64


class RngTests(unittest.TestCase):
    def test_same_seed_gives_identical_streams(self) -> None:
        np.testing.assert_array_equal(Rng(7).random(5), Rng(7).random(5))
        np.testing.assert_array_equal(Rng(7).permutation(20), Rng(7).permutation(20))

    def test_children_are_independent_of_parent_consumption(self) -> None:
        parent = Rng(7)
        before = parent.child("dropout").random(3)
        parent.random(100)

        np.testing.assert_array_equal(parent.child("dropout").random(3), before)
        self.assertFalse(np.array_equal(parent.child("other").random(3), before))

    def test_splitmix64_reference_value(self) -> None:
        self.assertEqual(splitmix64(0), 0xE220A8397B1DCDAF)
        self.assertNotEqual(derive_seed(1, "a"), derive_seed(1, "b"))


class PrimitiveTests(unittest.TestCase):
    def test_check_finite_raises_numerical_error(self) -> None:
        with self.assertRaises(NumericalError):
            check_finite(tensor([1.0, math.nan]), "probe")

    def test_matmul_rejects_mismatched_shapes(self) -> None:
        with self.assertRaises(ValueError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_sigmoid_and_tanh_are_stable_for_large_inputs(self) -> None:
        np.testing.assert_allclose(sigmoid(tensor([-800.0, 0.0, 800.0])), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(tanh(tensor([-800.0, 800.0])), [-1.0, 1.0])

    def test_softmax_rows_sum_to_one(self) -> None:
        probabilities = softmax(Rng(3).uniform(-50, 50, (4, 9)))

        np.testing.assert_allclose(probabilities.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_softmax_is_invariant_to_a_constant_shift(self) -> None:
        logits = Rng(5).uniform(-3.0, 3.0, (4, 6))

        for shift in (-50.0, 7.5, 100.0):
            np.testing.assert_allclose(softmax(logits + shift), softmax(logits), rtol=0, atol=1e-12)

    def test_cross_entropy_of_uniform_logits(self) -> None:
        loss, dlogits = softmax_cross_entropy(np.zeros(4), 2)

        self.assertAlmostEqual(loss, math.log(4), places=12)
        np.testing.assert_allclose(dlogits, [0.25, 0.25, -0.75, 0.25])

    def test_cross_entropy_rejects_bad_targets(self) -> None:
        with self.assertRaises(ValueError):
            softmax_cross_entropy(np.zeros(4), 4)
        with self.assertRaises(ValueError):
            softmax_cross_entropy(np.zeros((2, 4)), 0)

    def test_batch_cross_entropy_matches_single_rows(self) -> None:
        logits = Rng(5).uniform(-3, 3, (3, 5))
        targets = np.array([0, 4, 2])

        losses, dlogits = batch_softmax_cross_entropy(logits, targets)

        for row in range(3):
            loss, grad = softmax_cross_entropy(logits[row], int(targets[row]))
            self.assertAlmostEqual(losses[row], loss, places=14)
            np.testing.assert_allclose(dlogits[row], grad, atol=1e-15)

    def test_dropout_is_identity_at_inference(self) -> None:
        x = Rng(1).random((3, 4))

        y, mask = dropout(x, 0.5, None, training=False)

        self.assertIs(y, x)
        self.assertIsNone(mask)
        self.assertIs(dropout_backward(x, None), x)

    def test_dropout_scales_survivors(self) -> None:
        x = np.ones((200, 50))

        y, mask = dropout(x, 0.5, Rng(11), training=True)

        self.assertTrue(set(np.unique(y)) <= {0.0, 2.0})
        self.assertAlmostEqual(float(y.mean()), 1.0, delta=0.05)
        np.testing.assert_array_equal(dropout_backward(np.ones_like(x), mask), mask)

    def test_dropout_keeps_half_of_a_large_tensor(self) -> None:
        y, _ = dropout(np.ones(100_000), 0.5, Rng(3), training=True)

        self.assertAlmostEqual(np.count_nonzero(y) / 100_000, 0.5, delta=0.01)

    def test_dropout_rejects_invalid_rate_and_missing_rng(self) -> None:
        with self.assertRaises(ValueError):
            dropout(np.ones(3), 1.0, Rng(1), training=True)
        with self.assertRaises(ValueError):
            dropout(np.ones(3), 0.5, None, training=True)

    def test_concat_backward_splits_gradient(self) -> None:
        joined = concat(tensor([1.0, 2.0]), tensor([3.0]))

        da, db = concat_backward(tensor([4.0, 5.0, 6.0]), 2)

        np.testing.assert_array_equal(joined, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(da, [4.0, 5.0])
        np.testing.assert_array_equal(db, [6.0])


class GradCheckTests(unittest.TestCase):
    def test_relative_error_uses_floor(self) -> None:
        self.assertEqual(relative_error(0.0, 0.0), 0.0)
        self.assertAlmostEqual(relative_error(1e-9, 0.0, floor=1e-4), 1e-5)
        self.assertAlmostEqual(relative_error(2.0, 1.0), 0.5)

    def test_accepts_correct_gradient_and_restores_parameters(self) -> None:
        x = tensor([0.3, -1.2, 2.0])
        snapshot = x.copy()

        error = grad_check(lambda: (float(np.sum(x**3)), [3 * x**2]), [x])

        self.assertLess(error, 1e-8)
        np.testing.assert_array_equal(x, snapshot)

    def test_flags_wrong_gradient(self) -> None:
        x = tensor([0.3, -1.2, 2.0])

        error = grad_check(lambda: (float(np.sum(x**3)), [2 * x**2]), [x])

        self.assertGreater(error, 0.1)

    def test_rejects_mismatched_gradients(self) -> None:
        x = tensor([1.0, 2.0])
        with self.assertRaises(ValueError):
            grad_check(lambda: (0.0, []), [x])
        with self.assertRaises(ValueError):
            grad_check(lambda: (0.0, [np.zeros(3)]), [x])

import dataclasses
import math
import unittest
from unittest.mock import patch

import numpy as np

from src.config import ModelConfig
from src.models import DictEntry, EncodedRecord, IcdCode, Record
from src.services.corpus import EOS, PAD, build_code_vocab, build_vocab
from src.services.embeddings import build_embedding_matrix
from src.services.gradcheck import CHECKS, GradCheckSizes, toy_batch, toy_model
from src.services.model import (
    LstmCellParams,
    Seq2SeqModel,
    batch_forward_loss,
    build_context,
    decode,
    encode,
    encode_records,
    forward_loss,
    lstm_step,
    predict_logits,
    step_mask,
)
from src.services.prior import build_code_documents, fit_tfidf
from src.services.tensor import Rng, batch_softmax_cross_entropy, sigmoid, softmax

SIZES = GradCheckSizes()


class LstmCellParamsTests(unittest.TestCase):
    def test_initialize_sets_forget_bias(self) -> None:
        cell = LstmCellParams.initialize(5, 3, Rng(0))

        np.testing.assert_array_equal(cell.b, [0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0])
        self.assertEqual((cell.input_dim, cell.hidden), (5, 3))

    def test_rejects_inconsistent_shapes(self) -> None:
        with self.assertRaises(ValueError):
            LstmCellParams(W_x=np.zeros((12, 5)), W_h=np.zeros((12, 4)), b=np.zeros(12))
        with self.assertRaises(ValueError):
            LstmCellParams(W_x=np.zeros((12, 5)), W_h=np.zeros((12, 3)), b=np.zeros(11))


class ShapeAuditTests(unittest.TestCase):
    def test_default_recipe_widths_and_distributions(self) -> None:
        records = [
            Record("d1", 1, "congestive heart failure", (IcdCode("I500"),)),
            Record("d1", 2, "atrial fibrillation", (IcdCode("I48"),)),
        ]
        index = fit_tfidf(
            build_code_documents(
                [
                    DictEntry("Congestive heart failure", IcdCode("I500")),
                    DictEntry("Atrial fibrillation", IcdCode("I48")),
                    DictEntry("Peripheral vascular disease", IcdCode("I739")),
                ]
            )
        )
        config = ModelConfig()
        vocab = build_vocab(records)
        model = Seq2SeqModel.initialize(
            config,
            vocab,
            build_code_vocab(records),
            index,
            build_embedding_matrix(vocab, None, config.embedding_dim, Rng(1)),
            Rng(2),
        )

        batch = encode_records(model, records[:1])
        logits = predict_logits(model, batch.token_ids, batch.priors)

        self.assertEqual(model.context_dim, 1200 + 3)
        self.assertEqual(model.dec.hidden, 1000)
        self.assertEqual(model.dec.input_dim, 1203)
        self.assertEqual(logits.shape, (1, config.max_out, 4))
        np.testing.assert_allclose(softmax(logits).sum(axis=-1), 1.0, atol=1e-9)


class Seq2SeqModelTests(unittest.TestCase):
    def setUp(self) -> None:
        self.model = toy_model(SIZES, Rng(3))
        self.token_ids, self.target_ids, self.priors = toy_batch(self.model, SIZES, Rng(4))

    def test_rejects_index_without_prior(self) -> None:
        config = self.model.config.model_copy(update={"use_prior": False})
        with self.assertRaises(ValueError):
            dataclasses.replace(self.model, config=config)

    def test_no_prior_context_is_encoder_only(self) -> None:
        model = toy_model(SIZES, Rng(3), use_prior=False)

        self.assertEqual(model.prior_dim, 0)
        self.assertEqual(model.context_dim, 2 * SIZES.enc_hidden)
        self.assertEqual(model.prior_vectors(["aortic"]).shape, (1, 0))

    def test_parameter_names_cover_every_tensor(self) -> None:
        self.assertEqual(
            list(self.model.parameters()),
            [
                "embedding",
                "enc_fwd.W_x",
                "enc_fwd.W_h",
                "enc_fwd.b",
                "enc_bwd.W_x",
                "enc_bwd.W_h",
                "enc_bwd.b",
                "dec.W_x",
                "dec.W_h",
                "dec.b",
                "W_out",
                "b_out",
            ],
        )

    def test_tied_directions_agree_on_palindromes(self) -> None:
        model = dataclasses.replace(
            self.model,
            enc_bwd=LstmCellParams(
                self.model.enc_fwd.W_x.copy(),
                self.model.enc_fwd.W_h.copy(),
                self.model.enc_fwd.b.copy(),
            ),
        )

        enc_state, _ = encode(model, np.array([2, 5, 2]))

        half = SIZES.enc_hidden
        np.testing.assert_allclose(enc_state[:half], enc_state[half:], atol=1e-15)

    def test_step_mask_stops_after_first_eos(self) -> None:
        mask = step_mask(np.array([[3, EOS, PAD], [EOS, PAD, PAD], [2, 3, EOS]]))

        np.testing.assert_array_equal(mask, [[1, 1, 0], [1, 0, 0], [1, 1, 1]])
        with self.assertRaises(ValueError):
            step_mask(np.array([[2, 3, PAD]]))

    def test_loss_averages_steps_through_eos_then_records(self) -> None:
        loss, _ = batch_forward_loss(self.model, self.token_ids, self.target_ids, self.priors)

        logits = predict_logits(self.model, self.token_ids, self.priors)
        mask = step_mask(self.target_ids)
        step_losses, _ = batch_softmax_cross_entropy(
            logits.reshape(-1, logits.shape[-1]), self.target_ids.reshape(-1)
        )
        per_record = (step_losses.reshape(mask.shape) * mask).sum(axis=1) / mask.sum(axis=1)
        self.assertAlmostEqual(loss, float(per_record.mean()), places=12)

    def test_batch_gradients_are_mean_of_record_gradients(self) -> None:
        _, batch_grads = batch_forward_loss(
            self.model, self.token_ids, self.target_ids, self.priors
        )
        texts = [
            " ".join(self.model.vocab.id_to_token[t] for t in row if t >= 2)
            for row in self.token_ids
        ]
        singles = [
            forward_loss(self.model, EncodedRecord(tuple(tokens), tuple(targets)), text)[1]
            for tokens, targets, text in zip(self.token_ids, self.target_ids, texts, strict=True)
        ]

        for name, grad in batch_grads.items():
            expected = np.mean([single[name] for single in singles], axis=0)
            np.testing.assert_allclose(grad, expected, atol=1e-12, err_msg=name)

    def test_dropout_is_seeded_and_inactive_at_inference(self) -> None:
        model = toy_model(SIZES, Rng(3), dropout_rate=0.5)
        args = (model, self.token_ids, self.target_ids, self.priors)

        eval_loss, _ = batch_forward_loss(*args)
        first, _ = batch_forward_loss(*args, training=True, rng=Rng(9))
        second, _ = batch_forward_loss(*args, training=True, rng=Rng(9))

        self.assertEqual(first, second)
        self.assertNotEqual(first, eval_loss)
        self.assertEqual(eval_loss, batch_forward_loss(*args)[0])

    def test_prior_width_is_validated(self) -> None:
        with self.assertRaises(ValueError):
            predict_logits(self.model, self.token_ids, np.zeros((SIZES.batch, 1)))


class GradientCheckTests(unittest.TestCase):
    def test_every_backward_pass_matches_finite_differences(self) -> None:
        base = Rng(2024)
        for name, check, tolerance in CHECKS:
            for draw in range(3):
                with self.subTest(check=name, draw=draw):
                    error = check(base.child(f"{name}/{draw}"), SIZES)
                    self.assertLess(error, tolerance)


class LstmStepTests(unittest.TestCase):
    def setUp(self) -> None:
        rng = Rng(6)
        self.x = rng.uniform(-1.0, 1.0, (2, 5))
        self.h = rng.uniform(-1.0, 1.0, (2, 3))
        self.c = rng.uniform(-1.0, 1.0, (2, 3))

    def test_zero_weights_and_state_give_zero_output(self) -> None:
        cell = LstmCellParams(np.zeros((12, 5)), np.zeros((12, 3)), np.zeros(12))

        h_next, c_next, _ = lstm_step(self.x, np.zeros((2, 3)), np.zeros((2, 3)), cell)

        np.testing.assert_array_equal(h_next, np.zeros((2, 3)))
        np.testing.assert_array_equal(c_next, np.zeros((2, 3)))

    def test_closed_input_gate_keeps_forget_fraction_of_cell(self) -> None:
        W_x = np.zeros((12, 5))
        W_x[6:9] = Rng(8).uniform(-1.0, 1.0, (3, 5))
        b = np.zeros(12)
        b[:3] = -30.0
        b[3:6] = 1.0
        cell = LstmCellParams(W_x, np.zeros((12, 3)), b)

        _, c_next, cache = lstm_step(self.x, self.h, self.c, cell)

        self.assertTrue(np.all(np.abs(cache.g) > 0.0))
        np.testing.assert_allclose(c_next, sigmoid(np.float64(1.0)) * self.c, atol=1e-12)


class EncoderDirectionTests(unittest.TestCase):
    def test_reversing_the_input_swaps_encoder_halves(self) -> None:
        base = toy_model(SIZES, Rng(3))
        model = dataclasses.replace(
            base,
            enc_bwd=LstmCellParams(
                base.enc_fwd.W_x.copy(), base.enc_fwd.W_h.copy(), base.enc_fwd.b.copy()
            ),
        )
        tokens = np.array([2, 5, 3, 4])

        forward, _ = encode(model, tokens)
        backward, _ = encode(model, tokens[::-1].copy())

        half = SIZES.enc_hidden
        self.assertFalse(np.allclose(forward[:half], forward[half:]))
        np.testing.assert_allclose(forward[:half], backward[half:], atol=1e-15)
        np.testing.assert_allclose(forward[half:], backward[:half], atol=1e-15)


class BuildContextTests(unittest.TestCase):
    def setUp(self) -> None:
        self.model = toy_model(SIZES, Rng(3))
        self.enc_state, _ = encode(self.model, np.array([2, 3, 4]))

    def test_text_without_dictionary_terms_gets_zero_prior(self) -> None:
        context = build_context(self.model, self.enc_state, "zzz")

        np.testing.assert_array_equal(
            context, np.concatenate([self.enc_state, np.zeros(self.model.prior_dim)])
        )

    def test_without_prior_context_is_the_encoder_state(self) -> None:
        model = toy_model(SIZES, Rng(3), use_prior=False)
        enc_state, _ = encode(model, np.array([2, 3, 4]))

        context = build_context(model, enc_state, "aortic cardiac")

        np.testing.assert_array_equal(context, enc_state)

    def test_training_dropout_touches_the_encoder_half_only(self) -> None:
        model = toy_model(SIZES, Rng(3), dropout_rate=0.5)
        enc_state, _ = encode(model, np.array([2, 3, 4]))
        prior = model.prior_vectors(["aortic cardiac"])[0]

        context = build_context(model, enc_state, "aortic cardiac", training=True, rng=Rng(7))

        width = 2 * SIZES.enc_hidden
        self.assertGreater(prior.max(), 0.0)
        np.testing.assert_array_equal(context[width:], prior)
        for value, original in zip(context[:width], enc_state, strict=True):
            self.assertTrue(value == 0.0 or math.isclose(value, 2.0 * original), value)
        np.testing.assert_array_equal(
            build_context(model, enc_state, "aortic cardiac"), np.concatenate([enc_state, prior])
        )


class DecoderLossTests(unittest.TestCase):
    def setUp(self) -> None:
        self.model = toy_model(SIZES, Rng(3))
        self.token_ids, _, self.priors = toy_batch(self.model, SIZES, Rng(4))
        self.eos_only = np.array([[EOS, PAD, PAD]] * SIZES.batch)

    def test_zeroed_decoder_gives_uniform_step_loss(self) -> None:
        V = len(self.model.code_vocab)
        H = SIZES.dec_hidden
        model = dataclasses.replace(
            self.model,
            dec=LstmCellParams(
                np.zeros((4 * H, self.model.context_dim)), np.zeros((4 * H, H)), np.zeros(4 * H)
            ),
            W_out=np.zeros((V, H)),
            b_out=np.zeros(V),
        )
        _, targets, _ = toy_batch(model, SIZES, Rng(5))

        logits, _ = decode(model, np.ones((SIZES.batch, model.context_dim)))
        loss, _ = batch_forward_loss(model, self.token_ids, targets, self.priors)

        np.testing.assert_array_equal(logits, np.zeros((SIZES.batch, SIZES.max_out, V)))
        self.assertAlmostEqual(loss, math.log(V), places=12)
        self.assertAlmostEqual(loss, 1.6094379124341003, places=12)

    def test_steps_after_eos_do_not_change_the_loss(self) -> None:
        def noisy(model, context):
            logits, cache = decode(model, context)
            noise = Rng(11).uniform(-5.0, 5.0, logits[:, 1:, :].shape)
            return np.concatenate([logits[:, :1, :], logits[:, 1:, :] + noise], axis=1), cache

        loss, grads = batch_forward_loss(self.model, self.token_ids, self.eos_only, self.priors)
        with patch("src.services.model.decode", side_effect=noisy):
            noisy_loss, noisy_grads = batch_forward_loss(
                self.model, self.token_ids, self.eos_only, self.priors
            )

        self.assertEqual(loss, noisy_loss)
        for name, grad in grads.items():
            np.testing.assert_array_equal(grad, noisy_grads[name], err_msg=name)

    def test_eos_only_target_on_uniform_logits_costs_log_vocab(self) -> None:
        V = len(self.model.code_vocab)
        model = dataclasses.replace(
            self.model, W_out=np.zeros_like(self.model.W_out), b_out=np.zeros(V)
        )

        loss, _ = batch_forward_loss(model, self.token_ids, self.eos_only, self.priors)

        self.assertAlmostEqual(loss, math.log(V), places=12)


class EncodeRecordsTests(unittest.TestCase):
    def test_unseen_gold_codes_raise_one_aggregated_warning(self) -> None:
        model = toy_model(SIZES, Rng(3))
        known = model.code_vocab.codes[0]
        records = [
            Record("d1", 1, "aortic arrest", (known,)),
            Record("d1", 2, "renal failure", (IcdCode("Z999"),)),
            Record("d2", 1, "septic", (known, IcdCode("Z998"))),
        ]

        with self.assertLogs("src.services.model", level="WARNING") as logs:
            batch = encode_records(model, records)

        self.assertEqual(len(batch), 3)
        self.assertEqual(len(logs.output), 1)
        self.assertIn("event=records_unseen_codes count=2 total=3", logs.output[0])

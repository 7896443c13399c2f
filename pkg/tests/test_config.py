import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from src.config import SYNTH_PRESETS, ModelConfig, Settings, SynthConfig
from src.errors import ConfigError


class SettingsLoadTests(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def write_config(self, text: str) -> Path:
        path = self.root / "certcoder.toml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults_match_reference_recipe(self) -> None:
        with patch.dict(os.environ, {}, clear=True):
            settings = Settings.load()

        self.assertEqual(settings.model.enc_hidden, 600)
        self.assertEqual(settings.model.dec_hidden, 1000)
        self.assertEqual(settings.model.embedding_dim, 200)
        self.assertEqual(settings.model.dropout, 0.5)
        self.assertEqual((settings.train.lr, settings.train.batch_size), (0.001, 20))
        self.assertEqual(settings.train.folds, 5)
        self.assertIsNone(settings.train.seed)

    def test_loads_nested_sections_from_toml(self) -> None:
        path = self.write_config("[model]\nenc_hidden = 16\n\n[train]\nepochs = 3\n")

        with patch.dict(os.environ, {}, clear=True):
            settings = Settings.load(path)

        self.assertEqual(settings.model.enc_hidden, 16)
        self.assertEqual(settings.model.dec_hidden, 1000)
        self.assertEqual(settings.train.epochs, 3)

    def test_environment_is_read_with_prefix(self) -> None:
        with patch.dict(os.environ, {"CERTCODER_TRAIN__EPOCHS": "7"}, clear=True):
            settings = Settings.load()

        self.assertEqual(settings.train.epochs, 7)

    def test_precedence_is_cli_then_file_then_environment(self) -> None:
        path = self.write_config("[train]\nepochs = 3\nbatch_size = 4\n")
        environment = {"CERTCODER_TRAIN__EPOCHS": "7", "CERTCODER_TRAIN__LR": "0.5"}

        with patch.dict(os.environ, environment, clear=True):
            settings = Settings.load(path, {"train": {"batch_size": 9, "epochs": None}})

        self.assertEqual(settings.train.batch_size, 9)
        self.assertEqual(settings.train.epochs, 3)
        self.assertEqual(settings.train.lr, 0.5)

    def test_invalid_values_name_their_keys(self) -> None:
        with patch.dict(os.environ, {}, clear=True), self.assertRaises(ConfigError) as ctx:
            Settings.load(overrides={"model": {"dropout": 1.5}, "train": {"batch_size": 0}})

        message = str(ctx.exception)
        self.assertIn("model.dropout", message)
        self.assertIn("train.batch_size", message)

    def test_unknown_keys_are_rejected(self) -> None:
        path = self.write_config("[model]\nhidden = 3\n")

        with patch.dict(os.environ, {}, clear=True), self.assertRaises(ConfigError):
            Settings.load(path)

    def test_missing_and_malformed_files(self) -> None:
        with self.assertRaises(ConfigError):
            Settings.load(self.root / "absent.toml")
        with self.assertRaises(ConfigError):
            Settings.load(self.write_config("[model\n"))

    def test_with_seed_sets_train_and_synth_seeds(self) -> None:
        with patch.dict(os.environ, {}, clear=True):
            settings = Settings.load().with_seed(42)

        self.assertEqual((settings.train.seed, settings.synth.seed), (42, 42))
        self.assertEqual(settings.resolved()["train"]["seed"], 42)


class SectionModelTests(unittest.TestCase):
    def test_codes_per_line_must_be_a_distribution(self) -> None:
        for bad in ((), (0.5, 0.4), (1.2, -0.2)):
            with self.subTest(bad=bad), self.assertRaises(ValueError):
                SynthConfig(codes_per_line=bad)

    def test_presets_are_valid_synth_configs(self) -> None:
        for name, values in SYNTH_PRESETS.items():
            with self.subTest(preset=name):
                self.assertGreaterEqual(SynthConfig(**values).n_codes, 2)

    def test_decoder_needs_room_for_eos(self) -> None:
        with self.assertRaises(ValueError):
            ModelConfig(max_out=1)

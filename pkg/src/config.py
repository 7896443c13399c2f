import logging
from collections.abc import Mapping
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import (
    BaseSettings,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from .errors import ConfigError

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enc_hidden: int = Field(600, ge=1)
    dec_hidden: int = Field(1000, ge=1)
    embedding_dim: int = Field(200, ge=1)
    max_in: int = Field(32, ge=1)
    max_out: int = Field(8, ge=2)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    use_prior: bool = True
    min_count: int = Field(1, ge=1)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(0.001, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps_adam: float = Field(1e-8, gt=0.0)
    batch_size: int = Field(20, ge=1)
    epochs: int = Field(10, ge=1)
    seed: int | None = Field(None, ge=0, lt=1 << 64)
    shuffle: bool = True
    clip_norm: float | None = Field(None, gt=0.0)
    folds: int = Field(5, ge=2)
    jobs: int = Field(1, ge=1)


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_codes: int = Field(60, ge=2)
    n_lines: int = Field(1000, ge=1)
    codes_per_line: tuple[float, ...] = (0.6, 0.3, 0.1)
    abbreviation_prob: float = Field(0.2, ge=0.0, le=1.0)
    misspelling_prob: float = Field(0.1, ge=0.0, le=1.0)
    synonyms_per_code: int = Field(2, ge=0)
    max_lines_per_certificate: int = Field(4, ge=1)
    train_fraction: float = Field(0.7, gt=0.0, lt=1.0)
    seed: int | None = Field(None, ge=0, lt=1 << 64)

    @field_validator("codes_per_line")
    @classmethod
    def _check_distribution(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("codes_per_line needs at least one probability")
        if any(p < 0.0 or p > 1.0 for p in value):
            raise ValueError("codes_per_line probabilities must lie in [0, 1]")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("codes_per_line probabilities must sum to 1")
        return value


SYNTH_PRESETS: dict[str, dict[str, object]] = {
    "table2-mini": {
        "n_codes": 60,
        "n_lines": 1000,
        "abbreviation_prob": 0.2,
        "misspelling_prob": 0.1,
    },
    "overfit": {
        "n_codes": 20,
        "n_lines": 200,
        "abbreviation_prob": 0.0,
        "misspelling_prob": 0.0,
    },
}


def _deep_merge(
    base: Mapping[str, object], overrides: Mapping[str, object]
) -> dict[str, object]:
    merged: dict[str, object] = dict(base)
    for key, value in overrides.items():
        current = merged.get(key)
        if isinstance(current, Mapping) and isinstance(value, Mapping):
            merged[key] = _deep_merge(current, value)
        else:
            merged[key] = value
    return merged


def _describe_validation_error(exc: ValidationError) -> str:
    problems = [
        f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
        for error in exc.errors()
    ]
    return "Invalid configuration: " + "; ".join(problems)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="CERTCODER_",
        env_nested_delimiter="__",
        extra="forbid",
        frozen=True,
    )

    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    synth: SynthConfig = SynthConfig()

    @classmethod
    def load(
        cls,
        config_path: Path | None = None,
        overrides: Mapping[str, Mapping[str, object]] | None = None,
    ) -> "Settings":
        file_values: dict[str, object] = {}
        if config_path is not None:
            if not config_path.is_file():
                raise ConfigError(f"Config file not found: {config_path}")
            try:
                file_values = dict(
                    TomlConfigSettingsSource(cls, toml_file=config_path)()
                )
            except ValueError as exc:
                raise ConfigError(f"Config file {config_path} is not valid TOML: {exc}") from exc

        cleaned = {
            section: {key: value for key, value in values.items() if value is not None}
            for section, values in (overrides or {}).items()
        }
        merged = _deep_merge(file_values, {k: v for k, v in cleaned.items() if v})
        try:
            settings = cls(**merged)
        except ValidationError as exc:
            raise ConfigError(_describe_validation_error(exc)) from exc

        logger.debug("event=settings_resolved values=%s", settings.model_dump())
        return settings

    def with_seed(self, seed: int) -> "Settings":
        return self.model_copy(
            update={
                "train": self.train.model_copy(update={"seed": seed}),
                "synth": self.synth.model_copy(update={"seed": seed}),
            }
        )

    def resolved(self) -> dict[str, object]:
        return self.model_dump(mode="json")

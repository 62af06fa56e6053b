"""
Pipeline configuration classes
"""

import os
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.exceptions import ConfigError

PAIR_NAMES = ("TS", "TA", "AS")


def env_overrides() -> dict[str, Any]:
    """Runtime settings read from SIGNFLOW_* variables (and a .env file)"""
    load_dotenv()
    values: dict[str, Any] = {}
    threads = os.getenv("SIGNFLOW_THREADS")
    if threads:
        values["threads"] = threads
    log_level = os.getenv("SIGNFLOW_LOG_LEVEL")
    if log_level:
        values["log_level"] = log_level.upper()
    log_dir = os.getenv("SIGNFLOW_LOG_DIR")
    if log_dir:
        values["log_dir"] = log_dir
    return values


class Config(BaseModel):
    """Base (desk-scale) configuration"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # Model widths
    d_model: int = Field(default=64, gt=0)
    d_text_feature: int = Field(default=64, gt=0)
    d_audio_feature: int = Field(default=16, gt=0)
    num_heads: int = Field(default=4, gt=0)
    mlp_hidden: int = Field(default=128, gt=0)
    encoder_blocks: int = Field(default=2, ge=1)
    producer_blocks: int = Field(default=6, ge=1)
    use_positional_encoding: bool = True
    dtype: Literal["float32", "float64"] = "float32"

    # Diffusion
    diffusion_steps: int = Field(default=10, ge=0)
    init_noise_std: float = Field(default=0.1, ge=0)
    noise_injection_std: float = Field(default=0.1, ge=0)
    inference_noise: bool = True
    max_len: int = Field(default=64, ge=1)
    length_loss_weight: float = Field(default=0.1, ge=0)
    num_averaged: int = Field(default=20, ge=1)

    # Binding
    temperature: float = Field(default=0.07, gt=0)
    symmetric_nce: bool = True
    active_pairs: list[str] = Field(default_factory=lambda: ["TS", "TA"])

    # Embedding-consistency learning
    warmup_epochs: int = Field(default=50, ge=0)
    lambda_diffusion: float = Field(default=1.0, ge=0)
    lambda_ecl: float = Field(default=1.0, ge=0)
    lambda_nce: float = Field(default=1.0, ge=0)
    ecl_sampler_steps: int = Field(default=3, ge=1)
    ecl_fidelity_order: bool = False
    freeze_sign_encoder_in_ecl: bool = False
    mapping_aux_weight: float = Field(default=1.0, ge=0)

    # Training
    seed: int = Field(default=0, ge=0)
    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=32, ge=2)
    learning_rate: float = Field(default=1e-3, ge=0)
    ema_decay: float = Field(default=0.999, gt=0, lt=1)

    # Synthetic corpus
    vocab_size: int = Field(default=20, ge=2)
    num_joints: int = Field(default=8, ge=1, le=137)
    num_coords: int = Field(default=2, ge=1)
    motif_len: int = Field(default=8, ge=1)
    transition_frames: int = Field(default=2, ge=0)
    motif_delta_std: float = Field(default=0.05, gt=0)
    motif_smoothing: int = Field(default=3, ge=1)
    corpus_size: int = Field(default=2000, ge=3)
    min_words: int = Field(default=2, ge=1)
    max_sentence_words: int = Field(default=6, ge=1)
    max_words: int = Field(default=20, ge=1)
    audio_missing_fraction: float = Field(default=0.3, ge=0, le=1)
    frames_per_token: int = Field(default=4, ge=1)
    audio_jitter: float = Field(default=0.05, ge=0)
    frame_rate: float = Field(default=25.0, gt=0)
    audio_frame_rate: float = Field(default=100.0, gt=0)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    dev_fraction: float = Field(default=0.1, ge=0, lt=1)

    # Evaluation
    bt_epochs: int = Field(default=40, ge=0)
    bt_max_len: int = Field(default=8, ge=1)
    eval_repeats: int = Field(default=1, ge=1)
    threads: int = Field(default=1, ge=1)

    # Rendering
    render_width: int = Field(default=320, gt=0)
    render_height: int = Field(default=320, gt=0)
    render_scale: float = Field(default=40.0, gt=0)
    skeleton_edges: list[tuple[int, int]] | None = None

    # Logging
    log_level: str = "INFO"
    log_dir: str | None = None

    @field_validator("active_pairs", mode="before")
    @classmethod
    def _split_pairs(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [item.strip().upper() for item in value.split(",") if item.strip()]
        return value

    @field_validator("active_pairs")
    @classmethod
    def _known_pairs(cls, value: list[str]) -> list[str]:
        unknown = [pair for pair in value if pair not in PAIR_NAMES]
        if unknown:
            raise ValueError(f"unknown modality pair {unknown[0]!r} (expected one of {', '.join(PAIR_NAMES)})")
        if not value:
            raise ValueError("at least one modality pair must be active")
        return list(dict.fromkeys(value))

    @field_validator("skeleton_edges", mode="before")
    @classmethod
    def _parse_edges(cls, value: Any) -> Any:
        if isinstance(value, str):
            if not value.strip():
                return None
            return [tuple(int(j) for j in edge.split("-")) for edge in value.split(",")]
        return value

    @model_validator(mode="after")
    def _cross_field_checks(self) -> "Config":
        if self.min_words > self.max_sentence_words:
            raise ValueError("min_words exceeds max_sentence_words")
        if self.train_fraction + self.dev_fraction >= 1:
            raise ValueError("train_fraction + dev_fraction must leave room for a test split")
        if self.skeleton_edges is not None:
            for a, b in self.skeleton_edges:
                if not (0 <= a < self.num_joints and 0 <= b < self.num_joints):
                    raise ValueError(f"skeleton edge {a}-{b} references a joint outside 0..{self.num_joints - 1}")
        return self

    @property
    def frame_width(self) -> int:
        return self.num_joints * self.num_coords

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Joint connectivity, defaulting to a simple chain"""
        if self.skeleton_edges is not None:
            return list(self.skeleton_edges)
        return [(j, j + 1) for j in range(self.num_joints - 1)]

    @classmethod
    def init_from_env(cls) -> "Config":
        """Initialize configuration from environment variables"""
        config = cls()
        overrides = env_overrides()
        return config.with_overrides(**overrides) if overrides else config

    def with_env(self) -> "Config":
        """Apply the runtime environment (threads, log level, log directory) over a stored configuration"""
        overrides = env_overrides()
        return self.with_overrides(**overrides) if overrides else self

    def with_overrides(self, **overrides: Any) -> "Config":
        """Return a validated copy with the given keys replaced"""
        return _build(type(self), {**self.model_dump(), **overrides})

    def snapshot(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_snapshot(cls, data: dict[str, Any]) -> "Config":
        return _build(cls, dict(data))


class FidelityConfig(Config):
    """Configuration that keeps the original warmup length"""

    warmup_epochs: int = Field(default=500, ge=0)
    epochs: int = Field(default=600, ge=0)


class TestingConfig(Config):
    """Tiny configuration for unit tests"""

    __test__ = False

    d_model: int = Field(default=16, gt=0)
    d_text_feature: int = Field(default=16, gt=0)
    d_audio_feature: int = Field(default=8, gt=0)
    num_heads: int = Field(default=2, gt=0)
    mlp_hidden: int = Field(default=32, gt=0)
    producer_blocks: int = Field(default=2, ge=1)
    dtype: Literal["float32", "float64"] = "float64"
    diffusion_steps: int = Field(default=3, ge=0)
    max_len: int = Field(default=32, ge=1)
    num_averaged: int = Field(default=2, ge=1)
    warmup_epochs: int = Field(default=1, ge=0)
    epochs: int = Field(default=2, ge=0)
    batch_size: int = Field(default=4, ge=2)
    vocab_size: int = Field(default=6, ge=2)
    num_joints: int = Field(default=4, ge=1, le=137)
    motif_len: int = Field(default=4, ge=1)
    transition_frames: int = Field(default=1, ge=0)
    corpus_size: int = Field(default=20, ge=3)
    max_sentence_words: int = Field(default=3, ge=1)
    frames_per_token: int = Field(default=2, ge=1)
    bt_epochs: int = Field(default=2, ge=0)
    bt_max_len: int = Field(default=5, ge=1)


# Configuration mapping
config_map: dict[str, type[Config]] = {
    "default": Config,
    "fidelity": FidelityConfig,
    "testing": TestingConfig,
}


def _build(config_class: type[Config], values: dict[str, Any]) -> Config:
    unknown = [key for key in values if key not in config_class.model_fields]
    if unknown:
        raise ConfigError(f"Unknown configuration key '{unknown[0]}'", key=unknown[0])
    try:
        return config_class.model_validate(values)
    except ValidationError as err:
        first = err.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"Invalid value for '{key}': {first['msg']}", key=key) from err


def get_config(config_name: str | None = None) -> Config:
    """Get configuration instance based on environment"""
    if config_name is None:
        config_name = os.getenv("SIGNFLOW_ENV", "default")

    config_class = config_map.get(config_name)
    if config_class is None:
        raise ConfigError(f"Unknown configuration preset '{config_name}'", key=config_name)
    return config_class.init_from_env()


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None, config_name: str | None = None
) -> Config:
    """
    Build a configuration from a preset, a key=value file and command-line overrides

    Args:
        path: Optional key=value file (same syntax as .env); keys are case-insensitive
        overrides: Values that win over the file (None entries are ignored)
        config_name: Preset to start from

    Returns:
        Validated configuration
    """
    config = get_config(config_name)
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Configuration file not found: {path}")
        for key, value in dotenv_values(path).items():
            normalized = key.strip().lower()
            if normalized not in Config.model_fields:
                raise ConfigError(f"Unknown configuration key '{key}' in {path}", key=key)
            values[normalized] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return config.with_overrides(**values) if values else config

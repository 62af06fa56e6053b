"""
Per-module settings derived from the pipeline configuration
"""

from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import Config


class ModalityPair(StrEnum):
    """Pairs aligned by the contrastive binding loss"""

    TEXT_SIGN = "TS"
    TEXT_AUDIO = "TA"
    AUDIO_SIGN = "AS"


class DiffusionSchedule(BaseModel):
    """Refinement weights: delta has H+1 entries, alpha has H"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    steps: int = Field(ge=0)
    delta: np.ndarray
    alpha: np.ndarray

    @model_validator(mode="after")
    def _check_lengths(self) -> "DiffusionSchedule":
        if self.delta.shape != (self.steps + 1,) or self.alpha.shape != (self.steps,):
            raise ValueError("schedule vectors do not match the step count")
        return self


class GenerationConfig(BaseModel):
    """Sampling options"""

    num_averaged: int = Field(default=20, ge=1)
    noise_injection_std: float = Field(default=0.1, ge=0)
    init_noise_std: float = Field(default=0.1, ge=0)
    inference_noise: bool = True
    seed: int = 0

    @classmethod
    def from_config(cls, config: Config, **overrides) -> "GenerationConfig":
        values = {
            "num_averaged": config.num_averaged,
            "noise_injection_std": config.noise_injection_std,
            "init_noise_std": config.init_noise_std,
            "inference_noise": config.inference_noise,
            "seed": config.seed,
        }
        values.update(overrides)
        return cls(**values)


class BindingConfig(BaseModel):
    """Contrastive alignment options"""

    temperature: float = Field(default=0.07, gt=0)
    batch_size: int = Field(default=32, ge=2)
    active_pairs: frozenset[ModalityPair] = frozenset({ModalityPair.TEXT_SIGN, ModalityPair.TEXT_AUDIO})
    symmetric: bool = True

    @classmethod
    def from_config(cls, config: Config) -> "BindingConfig":
        return cls(
            temperature=config.temperature,
            batch_size=config.batch_size,
            active_pairs=frozenset(ModalityPair(p) for p in config.active_pairs),
            symmetric=config.symmetric_nce,
        )


class EclConfig(BaseModel):
    """Embedding-consistency and total-loss options"""

    warmup_epochs: int = Field(default=50, ge=0)
    lambda_diffusion: float = Field(default=1.0, ge=0)
    lambda_ecl: float = Field(default=1.0, ge=0)
    lambda_nce: float = Field(default=1.0, ge=0)
    sampler_steps: int = Field(default=3, ge=1)
    fidelity_order: bool = False
    freeze_sign_encoder: bool = False
    mapping_aux_weight: float = Field(default=1.0, ge=0)

    @classmethod
    def from_config(cls, config: Config) -> "EclConfig":
        return cls(
            warmup_epochs=config.warmup_epochs,
            lambda_diffusion=config.lambda_diffusion,
            lambda_ecl=config.lambda_ecl,
            lambda_nce=config.lambda_nce,
            sampler_steps=config.ecl_sampler_steps,
            fidelity_order=config.ecl_fidelity_order,
            freeze_sign_encoder=config.freeze_sign_encoder_in_ecl,
            mapping_aux_weight=config.mapping_aux_weight,
        )

"""
Synthetic corpus models
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.exceptions import ContractError
from src.models.sequence import AudioFeatureSeq, SignSequence, TextTokens
from src.utils.logging_config import get_logger

logger = get_logger("models.corpus")

STD_FLOOR = 1e-6


class MotifTable(BaseModel):
    """Per-token keypoint motifs (V x L_m x J x C)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    motifs: np.ndarray
    transition_frames: int = Field(ge=0)
    seed: int = 0

    @field_validator("motifs", mode="before")
    @classmethod
    def _as_motifs(cls, value) -> np.ndarray:
        motifs = np.asarray(value, dtype=np.float64)
        if motifs.ndim != 4:
            raise ValueError(f"motif table must be V x L_m x J x C, got {motifs.shape}")
        return motifs

    @property
    def vocab_size(self) -> int:
        return self.motifs.shape[0]

    @property
    def motif_len(self) -> int:
        return self.motifs.shape[1]

    def sequence_length(self, num_tokens: int) -> int:
        return num_tokens * self.motif_len + (num_tokens - 1) * self.transition_frames


class CorpusSample(BaseModel):
    """(text, optional audio, sign) triplet; audio-less samples form the unpaired set"""

    sample_id: str
    tokens: TextTokens
    audio: AudioFeatureSeq | None = None
    sign: SignSequence

    @property
    def has_audio(self) -> bool:
        return self.audio is not None


class ManifestRecord(BaseModel):
    """One line of a corpus manifest"""

    sample_id: str
    tokens: list[int]
    has_audio: bool
    path: str
    seed: int = Field(ge=0)


class DatasetSplit(BaseModel):
    """Disjoint train/dev/test sample-id lists"""

    train: list[str] = Field(default_factory=list)
    dev: list[str] = Field(default_factory=list)
    test: list[str] = Field(default_factory=list)
    audio_missing_fraction: float = Field(default=0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _disjoint(self) -> "DatasetSplit":
        seen: set[str] = set()
        for part in (self.train, self.dev, self.test):
            overlap = seen.intersection(part)
            if overlap:
                raise ValueError(f"sample {sorted(overlap)[0]!r} appears in more than one split")
            seen.update(part)
        return self

    def ids(self, name: str) -> list[str]:
        if name not in ("train", "dev", "test"):
            raise ContractError(f"unknown split '{name}'")
        return getattr(self, name)


class Normalizer(BaseModel):
    """Per-coordinate standardization fitted on the training split"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean: np.ndarray
    std: np.ndarray

    @field_validator("mean", "std", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _positive_std(self) -> "Normalizer":
        if self.mean.shape != self.std.shape:
            raise ValueError("normalizer mean and std shapes differ")
        if np.any(self.std <= 0):
            raise ValueError("normalizer std must be positive")
        return self

    @classmethod
    def fit(cls, frames: list[np.ndarray]) -> "Normalizer":
        """
        Fit per (joint, coordinate) statistics over every frame of the given sequences

        Args:
            frames: List of T x J x C arrays (the training split)

        Returns:
            Fitted normalizer; constant coordinates get std floored at 1e-6
        """
        if not frames:
            raise ContractError("cannot fit a normalizer on an empty training split")
        stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in frames], axis=0)
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        floored = std < STD_FLOOR
        if np.any(floored):
            logger.warning(f"⚠️ {int(floored.sum())} constant coordinate(s); std floored at {STD_FLOOR}")
            std = np.where(floored, STD_FLOOR, std)
        return cls(mean=mean, std=std)

    def apply(self, frames: np.ndarray) -> np.ndarray:
        return (np.asarray(frames, dtype=np.float64) - self.mean) / self.std

    def invert(self, frames: np.ndarray) -> np.ndarray:
        return np.asarray(frames, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

"""
Token, feature, keypoint and embedding models
"""

from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.exceptions import ContractError


class Modality(StrEnum):
    """Conditioning modalities"""

    TEXT = "text"
    AUDIO = "audio"


class TextTokens(BaseModel):
    """Token id sentence"""

    model_config = ConfigDict(frozen=True)

    ids: tuple[int, ...]
    vocab_size: int = Field(gt=0)

    @model_validator(mode="after")
    def _check_ids(self) -> "TextTokens":
        if not self.ids:
            raise ValueError("token list is empty")
        bad = [i for i in self.ids if not 0 <= i < self.vocab_size]
        if bad:
            raise ValueError(f"token id {bad[0]} outside vocabulary of size {self.vocab_size}")
        return self

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def words(self) -> list[str]:
        return [f"w{i}" for i in self.ids]


class AudioFeatureSeq(BaseModel):
    """Synthetic filterbank-like audio frames"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray
    frame_rate: float = Field(default=100.0, gt=0)

    @field_validator("frames", mode="before")
    @classmethod
    def _as_matrix(cls, value) -> np.ndarray:
        frames = np.asarray(value, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"audio frames must be a non-empty T x d matrix, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("audio frames contain non-finite values")
        return frames

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


class SignSequence(BaseModel):
    """Keypoint frames (T x J x C)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray
    frame_rate: float = Field(default=25.0, gt=0)

    @field_validator("frames", mode="before")
    @classmethod
    def _as_keypoints(cls, value) -> np.ndarray:
        frames = np.asarray(value)
        if not np.issubdtype(frames.dtype, np.floating):
            frames = frames.astype(np.float64)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise ValueError(f"sign frames must have shape T x J x C with T >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("sign frames contain non-finite coordinates")
        return frames

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def num_coords(self) -> int:
        return self.frames.shape[2]


class Embedding(BaseModel):
    """Fixed-width embedding vector in conditioning (raw) or joint-space (unit) form"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    normalized: bool = False

    @field_validator("values", mode="before")
    @classmethod
    def _as_vector(cls, value) -> np.ndarray:
        values = np.asarray(value, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError(f"embedding must be a non-empty vector, got shape {values.shape}")
        return values

    @model_validator(mode="after")
    def _check_norm(self) -> "Embedding":
        if self.normalized and abs(float(np.linalg.norm(self.values)) - 1.0) >= 1e-9:
            raise ValueError("normalized embedding does not have unit norm")
        return self

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def unit(self) -> "Embedding":
        """Joint-space view of this embedding"""
        if self.normalized:
            return self
        norm = float(np.linalg.norm(self.values))
        if norm == 0.0:
            raise ContractError("cannot normalize a zero embedding")
        return Embedding(values=self.values / norm, normalized=True)

"""
Loss, metric and checkpoint report models
"""

import math
from enum import StrEnum
from typing import Any

from pydantic import BaseModel, Field, model_validator

METRIC_KEYS = ("bleu1", "bleu2", "bleu3", "bleu4", "rouge_l_f1", "keypoint_mse", "dtw")


class LossReport(BaseModel):
    """Loss components of one step or the mean over an epoch"""

    l_d: float = 0.0
    l_ecl: float = 0.0
    l_nce: float = 0.0
    total: float = 0.0
    pairs: dict[str, float] = Field(default_factory=dict)
    l_len: float = 0.0
    l_map: float = 0.0
    ecl_active: bool = True
    epoch: int = 0

    def consistent_with(
        self, lambda_diffusion: float, lambda_ecl: float, lambda_nce: float, mapping_aux_weight: float = 1.0
    ) -> bool:
        expected = lambda_diffusion * (self.l_d + self.l_len) + lambda_nce * self.l_nce + mapping_aux_weight * self.l_map
        if self.ecl_active:
            expected += lambda_ecl * self.l_ecl
        return abs(self.total - expected) <= 1e-9 * max(1.0, abs(expected))


class MetricReport(BaseModel):
    """Split-level evaluation means"""

    bleu1: float = Field(default=0.0, ge=0, le=1)
    bleu2: float = Field(default=0.0, ge=0, le=1)
    bleu3: float = Field(default=0.0, ge=0, le=1)
    bleu4: float = Field(default=0.0, ge=0, le=1)
    rouge_l_f1: float = Field(default=0.0, ge=0, le=1)
    keypoint_mse: float = Field(default=0.0, ge=0)
    dtw: float = Field(default=0.0, ge=0)
    count: int = Field(default=0, ge=0)
    modality: str = "text"
    repeats: int = Field(default=1, ge=1)
    spread: dict[str, float] = Field(default_factory=dict)
    bt_accuracy: float | None = None
    bt_ceiling_bleu1: float | None = None
    bt_ceiling_rouge_l: float | None = None

    def to_lines(self) -> str:
        """key=value text, one pair per line"""
        lines = [f"{key}={getattr(self, key):.6f}" for key in METRIC_KEYS]
        lines.append(f"count={self.count}")
        lines.append(f"modality={self.modality}")
        lines.append(f"repeats={self.repeats}")
        for key, value in sorted(self.spread.items()):
            lines.append(f"{key}_std={value:.6f}")
        for key in ("bt_accuracy", "bt_ceiling_bleu1", "bt_ceiling_rouge_l"):
            value = getattr(self, key)
            if value is not None:
                lines.append(f"{key}={value:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "MetricReport":
        values: dict[str, Any] = {}
        spread: dict[str, float] = {}
        for line in text.splitlines():
            if not line.strip() or "=" not in line:
                continue
            key, value = line.split("=", 1)
            if key.endswith("_std"):
                spread[key[: -len("_std")]] = float(value)
            elif key == "modality":
                values[key] = value
            elif key in ("count", "repeats"):
                values[key] = int(value)
            else:
                values[key] = float(value)
        return cls(spread=spread, **values)

    def metrics(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in METRIC_KEYS}


class EntryKind(StrEnum):
    """What a checkpoint payload entry holds"""

    PARAM = "param"
    ADAM_M = "adam_m"
    ADAM_V = "adam_v"
    EMA = "ema"
    BUFFER = "buffer"


class ManifestEntry(BaseModel):
    name: str
    kind: EntryKind = EntryKind.PARAM
    shape: list[int]
    offset: int = Field(ge=0)

    @property
    def count(self) -> int:
        return math.prod(self.shape)


class CheckpointManifest(BaseModel):
    """Index of a checkpoint payload"""

    version: int = 1
    model: str = "predictor"
    dtype: str = "float32"
    entries: list[ManifestEntry] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)
    ema: bool = True
    optimizer_step: int = 0
    epoch: int = 0

    @model_validator(mode="after")
    def _unique_entries(self) -> "CheckpointManifest":
        seen: set[tuple[str, str]] = set()
        for entry in self.entries:
            key = (entry.kind.value, entry.name)
            if key in seen:
                raise ValueError(f"duplicate checkpoint entry {entry.kind}:{entry.name}")
            seen.add(key)
        return self

    def params(self, kind: EntryKind = EntryKind.PARAM) -> list[ManifestEntry]:
        return [e for e in self.entries if e.kind == kind]


class BaselineReport(BaseModel):
    """Reference scores of generation-free predictors on one split"""

    mean_sequence_mse: float = Field(ge=0)
    mean_sequence_dtw: float = Field(ge=0)
    shuffled_bleu1: float = Field(ge=0, le=1)
    shuffled_bleu4: float = Field(ge=0, le=1)
    shuffled_rouge_l: float = Field(ge=0, le=1)
    count: int = Field(ge=0)

    def to_lines(self) -> str:
        lines = [f"{key}={value:.6f}" for key, value in self.model_dump().items() if key != "count"]
        lines.append(f"count={self.count}")
        return "\n".join(lines) + "\n"

"""
Data models for signflow
"""

from src.models.corpus import CorpusSample, DatasetSplit, ManifestRecord, MotifTable, Normalizer
from src.models.reports import (
    BaselineReport,
    CheckpointManifest,
    EntryKind,
    LossReport,
    ManifestEntry,
    MetricReport,
)
from src.models.sequence import AudioFeatureSeq, Embedding, Modality, SignSequence, TextTokens
from src.models.settings import BindingConfig, DiffusionSchedule, EclConfig, GenerationConfig, ModalityPair

__all__ = [
    "AudioFeatureSeq",
    "BaselineReport",
    "BindingConfig",
    "CheckpointManifest",
    "CorpusSample",
    "DatasetSplit",
    "DiffusionSchedule",
    "EclConfig",
    "Embedding",
    "EntryKind",
    "GenerationConfig",
    "LossReport",
    "ManifestEntry",
    "ManifestRecord",
    "MetricReport",
    "Modality",
    "ModalityPair",
    "MotifTable",
    "Normalizer",
    "SignSequence",
    "TextTokens",
]

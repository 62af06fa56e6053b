"""
Procedural sign-language corpus: motif table, samples, splits, normalization and storage
"""

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import ValidationError

from src.config import Config
from src.exceptions import ContractError, FormatError
from src.models.corpus import CorpusSample, DatasetSplit, ManifestRecord, MotifTable, Normalizer
from src.models.sequence import SignSequence, TextTokens
from src.services.feature_service import FeatureService
from src.services.sequence_io import deserialize_sequence, serialize_sequence
from src.utils.logging_config import PerformanceLogger, get_logger

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.jsonl"
METADATA_FILE = "metadata.json"
SEQUENCE_DIR = "sequences"

# Stream tags mixed into seeds so independent draws never share a generator
SPLIT_STREAM = 7919
AUDIO_STREAM = 104729


def build_motif_table(
    vocab_size: int,
    num_joints: int,
    num_coords: int,
    motif_len: int,
    seed: int,
    delta_std: float = 0.05,
    smoothing: int = 3,
    transition_frames: int = 2,
) -> MotifTable:
    """
    One smooth random walk per token

    Each motif starts at a standard-normal pose; its frame-to-frame deltas are Gaussian
    noise low-pass filtered by a moving average of width `smoothing`, rescaled so the
    step standard deviation equals `delta_std`.
    """
    if min(vocab_size, num_joints, num_coords, motif_len, smoothing) < 1:
        raise ContractError("motif table dimensions must be positive")
    rng = np.random.default_rng(seed)
    starts = rng.normal(0.0, 1.0, size=(vocab_size, 1, num_joints, num_coords))
    if motif_len > 1:
        raw = rng.normal(0.0, 1.0, size=(vocab_size, motif_len - 1 + smoothing - 1, num_joints, num_coords))
        smoothed = sliding_window_view(raw, smoothing, axis=1).mean(axis=-1)
        deltas = smoothed * np.sqrt(smoothing) * delta_std
    else:
        deltas = np.zeros((vocab_size, 0, num_joints, num_coords))
    walk = np.concatenate([np.zeros_like(starts), np.cumsum(deltas, axis=1)], axis=1)
    return MotifTable(motifs=starts + walk, transition_frames=transition_frames, seed=seed)


def render_tokens(tokens: Sequence[int], table: MotifTable) -> np.ndarray:
    """Concatenate motifs with linearly interpolated transitions (frame k of T at k/(T+1))"""
    if not tokens:
        raise ContractError("token list is empty")
    steps = np.arange(1, table.transition_frames + 1) / (table.transition_frames + 1)
    pieces = [table.motifs[tokens[0]]]
    for prev, nxt in zip(tokens[:-1], tokens[1:], strict=True):
        start, end = table.motifs[prev][-1], table.motifs[nxt][0]
        if table.transition_frames:
            pieces.append(start + steps[:, None, None] * (end - start))
        pieces.append(table.motifs[nxt])
    return np.concatenate(pieces, axis=0).astype(np.float32)


def synthesize_sample(
    tokens: Sequence[int] | TextTokens,
    table: MotifTable,
    seed: int,
    with_audio: bool,
    features: FeatureService | None = None,
    sample_id: str = "sample",
    frame_rate: float = 25.0,
) -> CorpusSample:
    text = tokens if isinstance(tokens, TextTokens) else TextTokens(ids=tuple(tokens), vocab_size=table.vocab_size)
    sign = SignSequence(frames=render_tokens(list(text.ids), table), frame_rate=frame_rate)
    audio = None
    if with_audio:
        if features is None:
            raise ContractError("audio requested without a feature service")
        audio = features.audio(text, seed)
    return CorpusSample(sample_id=sample_id, tokens=text, audio=audio, sign=sign)


def decode_by_motif(frames: np.ndarray, table: MotifTable) -> list[int]:
    """
    Recover tokens from a clean (unnormalized) synthetic sequence by nearest-motif matching

    Raises:
        ContractError: if the length is not a whole number of motif slots
    """
    frames = np.asarray(frames, dtype=np.float64)
    slot = table.motif_len + table.transition_frames
    length = frames.shape[0] + table.transition_frames
    if length % slot:
        raise ContractError(f"sequence of {frames.shape[0]} frames is not a whole number of motifs")
    tokens = []
    for k in range(length // slot):
        segment = frames[k * slot : k * slot + table.motif_len]
        distances = ((table.motifs - segment[None]) ** 2).sum(axis=(1, 2, 3))
        tokens.append(int(np.argmin(distances)))
    return tokens


def batch_pad(
    sequences: Sequence[np.ndarray], max_len: int | None = None, ids: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """
    Zero-pad variable-length sequences to the batch maximum

    Args:
        sequences: Arrays of shape (T_i, ...) with equal trailing dimensions
        max_len: Upper bound on T_i (None for no bound)
        ids: Optional sample ids for error messages

    Returns:
        (padded (B, T_max, ...), valid mask (B, T_max))
    """
    if not sequences:
        raise ContractError("cannot pad an empty batch")
    lengths = [len(s) for s in sequences]
    for i, length in enumerate(lengths):
        if max_len is not None and length > max_len:
            name = ids[i] if ids is not None else str(i)
            raise ContractError(f"sample {name} has {length} frames, above the limit of {max_len}")
    batch_len = max(lengths)
    first = np.asarray(sequences[0])
    padded = np.zeros((len(sequences), batch_len, *first.shape[1:]), dtype=first.dtype)
    mask = np.zeros((len(sequences), batch_len), dtype=bool)
    for i, seq in enumerate(sequences):
        padded[i, : lengths[i]] = seq
        mask[i, : lengths[i]] = True
    return padded, mask


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class SyntheticCorpus:
    """Samples in raw units plus everything needed to normalize and split them"""

    config: Config
    table: MotifTable
    samples: dict[str, CorpusSample]
    seeds: dict[str, int]
    split: DatasetSplit
    normalizer: Normalizer
    mean_first_pose: np.ndarray

    def subset(self, name: str) -> list[CorpusSample]:
        return [self.samples[i] for i in self.split.ids(name)]

    def normalized(self, sample: CorpusSample) -> np.ndarray:
        return self.normalizer.apply(sample.sign.frames)

    @property
    def audio_missing(self) -> list[str]:
        return [sid for sid, s in self.samples.items() if not s.has_audio]


class CorpusService:
    """Builds, stores and loads synthetic corpora for one configuration"""

    def __init__(self, config: Config, features: FeatureService | None = None):
        self.config = config
        self.features = features or FeatureService.from_config(config)

    def motif_table(self) -> MotifTable:
        cfg = self.config
        return build_motif_table(
            cfg.vocab_size,
            cfg.num_joints,
            cfg.num_coords,
            cfg.motif_len,
            cfg.seed,
            delta_std=cfg.motif_delta_std,
            smoothing=cfg.motif_smoothing,
            transition_frames=cfg.transition_frames,
        )

    def build_corpus(self) -> SyntheticCorpus:
        """Generate the full corpus; a pure function of the configuration"""
        cfg = self.config
        with PerformanceLogger(logger, f"synthesize {cfg.corpus_size} samples"):
            table = self.motif_table()
            count = cfg.corpus_size
            order = np.random.default_rng([cfg.seed, AUDIO_STREAM]).permutation(count)
            missing = set(order[: round(cfg.audio_missing_fraction * count)].tolist())

            samples: dict[str, CorpusSample] = {}
            seeds: dict[str, int] = {}
            dropped = 0
            for index in range(count):
                sample_seed = derive_seed(cfg.seed, index)
                rng = np.random.default_rng(sample_seed)
                length = int(rng.integers(cfg.min_words, cfg.max_sentence_words + 1))
                tokens = rng.integers(0, cfg.vocab_size, size=length).tolist()
                if len(tokens) > cfg.max_words:
                    dropped += 1
                    continue
                sample_id = f"s{index:05d}"
                samples[sample_id] = synthesize_sample(
                    tokens,
                    table,
                    sample_seed,
                    with_audio=index not in missing,
                    features=self.features,
                    sample_id=sample_id,
                    frame_rate=cfg.frame_rate,
                )
                seeds[sample_id] = sample_seed
            if dropped:
                logger.info(f"Dropped {dropped} sample(s) longer than {cfg.max_words} words")

            split = self._split(list(samples))
            return self._assemble(table, samples, seeds, split)

    def _split(self, ids: list[str]) -> DatasetSplit:
        cfg = self.config
        order = np.random.default_rng([cfg.seed, SPLIT_STREAM]).permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n_train = max(1, round(cfg.train_fraction * len(ids)))
        n_dev = round(cfg.dev_fraction * len(ids))
        return DatasetSplit(
            train=sorted(shuffled[:n_train]),
            dev=sorted(shuffled[n_train : n_train + n_dev]),
            test=sorted(shuffled[n_train + n_dev :]),
            audio_missing_fraction=cfg.audio_missing_fraction,
        )

    def _assemble(
        self,
        table: MotifTable,
        samples: dict[str, CorpusSample],
        seeds: dict[str, int],
        split: DatasetSplit,
        normalizer: Normalizer | None = None,
    ) -> SyntheticCorpus:
        if normalizer is None:
            normalizer = Normalizer.fit([samples[i].sign.frames for i in split.train])
        first_poses = [normalizer.apply(samples[i].sign.frames[0]) for i in split.train]
        return SyntheticCorpus(
            config=self.config,
            table=table,
            samples=samples,
            seeds=seeds,
            split=split,
            normalizer=normalizer,
            mean_first_pose=np.mean(first_poses, axis=0),
        )

    def save_corpus(self, corpus: SyntheticCorpus, directory: str | Path) -> Path:
        """Write manifest, sequence files and metadata under `directory`"""
        directory = Path(directory)
        (directory / SEQUENCE_DIR).mkdir(parents=True, exist_ok=True)
        lines = []
        for sample_id, sample in corpus.samples.items():
            relative = f"{SEQUENCE_DIR}/{sample_id}.sgsq"
            serialize_sequence(sample.sign, directory / relative)
            record = ManifestRecord(
                sample_id=sample_id,
                tokens=list(sample.tokens.ids),
                has_audio=sample.has_audio,
                path=relative,
                seed=corpus.seeds[sample_id],
            )
            lines.append(record.model_dump_json())
        (directory / MANIFEST_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
        metadata = {
            "config": corpus.config.snapshot(),
            "split": corpus.split.model_dump(),
            "normalizer": corpus.normalizer.to_dict(),
        }
        (directory / METADATA_FILE).write_text(json.dumps(metadata, indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Saved corpus of {len(corpus.samples)} samples to {directory}")
        return directory

    def load_corpus(self, directory: str | Path) -> SyntheticCorpus:
        directory = Path(directory)
        manifest_path = directory / MANIFEST_FILE
        metadata_path = directory / METADATA_FILE
        if not manifest_path.is_file() or not metadata_path.is_file():
            raise ContractError(f"no corpus found in {directory}; run `signflow synth` first")

        metadata = json.loads(metadata_path.read_text(encoding="utf-8"))
        config = Config.from_snapshot(metadata["config"])
        service = CorpusService(config)
        table = service.motif_table()

        samples: dict[str, CorpusSample] = {}
        seeds: dict[str, int] = {}
        offset = 0
        raw = manifest_path.read_bytes()
        for line in raw.splitlines(keepends=True):
            if line.strip():
                try:
                    record = ManifestRecord.model_validate_json(line)
                except ValidationError as err:
                    raise FormatError(f"malformed manifest record in {manifest_path.name}", offset=offset) from err
                sign = deserialize_sequence(directory / record.path)
                tokens = TextTokens(ids=tuple(record.tokens), vocab_size=config.vocab_size)
                audio = service.features.audio(tokens, record.seed) if record.has_audio else None
                samples[record.sample_id] = CorpusSample(
                    sample_id=record.sample_id, tokens=tokens, audio=audio, sign=sign
                )
                seeds[record.sample_id] = record.seed
            offset += len(line)

        split = DatasetSplit.model_validate(metadata["split"])
        normalizer = Normalizer.model_validate(metadata["normalizer"])
        logger.info(f"Loaded corpus of {len(samples)} samples from {directory}")
        return service._assemble(table, samples, seeds, split, normalizer)

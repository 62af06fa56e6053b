"""
Deterministic synthetic text and audio feature extraction
"""

import hashlib
from collections.abc import Sequence

import numpy as np

from src.config import Config
from src.exceptions import ContractError
from src.models.sequence import AudioFeatureSeq, TextTokens


def _token_ids(tokens: TextTokens | Sequence[int]) -> tuple[int, ...]:
    ids = tokens.ids if isinstance(tokens, TextTokens) else tuple(int(t) for t in tokens)
    if not ids:
        raise ContractError("token list is empty")
    return ids


def hashed_generator(domain: str, seed: int, token: int) -> np.random.Generator:
    """numpy generator seeded by sha256("{domain}|{seed}|{token}"), first 8 bytes little-endian"""
    digest = hashlib.sha256(f"{domain}|{seed}|{token}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def text_token_vector(token: int, seed: int, dim: int) -> np.ndarray:
    vector = hashed_generator("text", seed, token).standard_normal(dim)
    return vector / np.linalg.norm(vector)


def audio_base_vector(token: int, seed: int, dim: int) -> np.ndarray:
    return hashed_generator("audio", seed, token).standard_normal(dim)


def extract_text_features(tokens: TextTokens | Sequence[int], seed: int, dim: int = 64) -> np.ndarray:
    """
    Per-token pseudo-random unit vectors

    Args:
        tokens: Sentence token ids
        seed: Feature seed
        dim: Feature width

    Returns:
        len(tokens) x dim matrix
    """
    ids = _token_ids(tokens)
    return np.stack([text_token_vector(t, seed, dim) for t in ids])


def extract_audio_features(
    tokens: TextTokens | Sequence[int],
    seed: int,
    dim: int = 16,
    frames_per_token: int = 4,
    jitter: float = 0.05,
    base_seed: int | None = None,
    frame_rate: float = 100.0,
) -> AudioFeatureSeq:
    """
    Block-structured synthetic speech: each token yields `frames_per_token` frames of its
    base vector plus uniform jitter in [-jitter, jitter]

    Args:
        tokens: Sentence token ids
        seed: Jitter seed
        dim: Feature width
        frames_per_token: Frames emitted per token
        jitter: Jitter amplitude
        base_seed: Seed of the token base vectors (defaults to `seed`)
        frame_rate: Frames per second

    Returns:
        AudioFeatureSeq with len(tokens) * frames_per_token frames
    """
    ids = _token_ids(tokens)
    base_seed = seed if base_seed is None else base_seed
    bases = np.repeat(np.stack([audio_base_vector(t, base_seed, dim) for t in ids]), frames_per_token, axis=0)
    if jitter > 0:
        rng = np.random.default_rng([seed, len(ids), *ids])
        bases = bases + rng.uniform(-jitter, jitter, size=bases.shape)
    return AudioFeatureSeq(frames=bases, frame_rate=frame_rate)


class FeatureService:
    """Feature extractors bound to one corpus-level feature seed"""

    def __init__(
        self,
        d_text: int = 64,
        d_audio: int = 16,
        frames_per_token: int = 4,
        jitter: float = 0.05,
        feature_seed: int = 0,
        audio_frame_rate: float = 100.0,
    ):
        self.d_text = d_text
        self.d_audio = d_audio
        self.frames_per_token = frames_per_token
        self.jitter = jitter
        self.feature_seed = feature_seed
        self.audio_frame_rate = audio_frame_rate

    @classmethod
    def from_config(cls, config: Config) -> "FeatureService":
        return cls(
            d_text=config.d_text_feature,
            d_audio=config.d_audio_feature,
            frames_per_token=config.frames_per_token,
            jitter=config.audio_jitter,
            feature_seed=config.seed,
            audio_frame_rate=config.audio_frame_rate,
        )

    def text(self, tokens: TextTokens | Sequence[int]) -> np.ndarray:
        return extract_text_features(tokens, self.feature_seed, self.d_text)

    def audio(self, tokens: TextTokens | Sequence[int], seed: int) -> AudioFeatureSeq:
        """Audio for one utterance; `seed` varies the jitter between recordings"""
        return extract_audio_features(
            tokens,
            seed,
            dim=self.d_audio,
            frames_per_token=self.frames_per_token,
            jitter=self.jitter,
            base_seed=self.feature_seed,
            frame_rate=self.audio_frame_rate,
        )

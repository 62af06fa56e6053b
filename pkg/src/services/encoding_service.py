"""
Embedding of single utterances, sign sequences and diffusion steps
"""

import numpy as np

from src.autograd.tensor import Tensor, no_grad
from src.exceptions import ContractError
from src.models.sequence import AudioFeatureSeq, Embedding, SignSequence
from src.networks.model import PredictorModel


class EncodingService:
    """Inference-time wrappers around the five encoders"""

    def __init__(self, model: PredictorModel):
        self.model = model

    def _run(self, encoder, features: np.ndarray, expected_width: int, label: str) -> Embedding:
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ContractError(f"{label} features must be a non-empty sequence of vectors")
        if features.shape[1] != expected_width:
            raise ContractError(f"{label} features have width {features.shape[1]}, model expects {expected_width}")
        with no_grad():
            out = encoder(Tensor(features[None], dtype=self.model.dtype))
        return Embedding(values=out.data[0])

    def encode_text(self, features: np.ndarray) -> Embedding:
        encoder = self.model.encoders.text
        return self._run(encoder, features, encoder.in_dim, "text")

    def encode_audio(self, features: AudioFeatureSeq | np.ndarray) -> Embedding:
        frames = features.frames if isinstance(features, AudioFeatureSeq) else features
        encoder = self.model.encoders.audio
        return self._run(encoder, frames, encoder.in_dim, "audio")

    def _sign_like(self, encoder, sequence: SignSequence | np.ndarray, label: str) -> Embedding:
        frames = sequence.frames if isinstance(sequence, SignSequence) else np.asarray(sequence)
        if not np.all(np.isfinite(frames)):
            raise ContractError(f"{label} sequence contains non-finite coordinates")
        if frames.ndim != 3:
            raise ContractError(f"{label} sequence must be T x J x C, got {frames.shape}")
        return self._run(encoder, frames.reshape(frames.shape[0], -1), encoder.in_dim, label)

    def encode_sign(self, sequence: SignSequence | np.ndarray) -> Embedding:
        return self._sign_like(self.model.encoders.sign, sequence, "sign")

    def encode_noise(self, sequence: SignSequence | np.ndarray) -> Embedding:
        return self._sign_like(self.model.encoders.noise, sequence, "noise")

    def encode_step(self, step: int) -> Embedding:
        with no_grad():
            out = self.model.encoders.step(np.array([step]))
        return Embedding(values=out.data[0])

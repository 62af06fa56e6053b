"""
Contrastive binding of text, audio and sign embeddings in a joint space
"""

import numpy as np

from src.autograd.tensor import Tensor, l2_norm, log_softmax
from src.exceptions import ContractError
from src.models.sequence import Embedding
from src.models.settings import BindingConfig, ModalityPair

PAIR_MODALITIES = {
    ModalityPair.TEXT_SIGN: ("text", "sign"),
    ModalityPair.TEXT_AUDIO: ("text", "audio"),
    ModalityPair.AUDIO_SIGN: ("audio", "sign"),
}


def cosine_sim(a: Embedding, b: Embedding) -> float:
    """Dot product of the unit-norm views"""
    if a.dim != b.dim:
        raise ContractError(f"embedding widths differ ({a.dim} vs {b.dim})")
    return float(np.clip(np.dot(a.unit().values, b.unit().values), -1.0, 1.0))


def normalize_rows(x: Tensor) -> Tensor:
    """L2-normalize each row of a (B, d) tensor"""
    if np.any(np.linalg.norm(x.data, axis=-1) == 0):
        raise ContractError("cannot normalize a zero embedding")
    return x / l2_norm(x, axis=-1, keepdims=True)


def info_nce_loss(anchors: Tensor, positives: Tensor, temperature: float, symmetric: bool = True) -> Tensor:
    """
    InfoNCE over index-aligned unit-norm pairs

    Every other row of the batch acts as a negative. With `symmetric` the
    anchor-to-positive and positive-to-anchor directions are averaged.

    Args:
        anchors: (B, d) unit-norm embeddings
        positives: (B, d) unit-norm embeddings
        temperature: Softmax temperature (> 0)
        symmetric: Average both directions

    Returns:
        Scalar loss tensor
    """
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    anchors = anchors if isinstance(anchors, Tensor) else Tensor(anchors)
    positives = positives if isinstance(positives, Tensor) else Tensor(positives)
    if anchors.shape != positives.shape or anchors.ndim != 2:
        raise ContractError(f"pair batch shapes differ: {anchors.shape} vs {positives.shape}")
    batch = anchors.shape[0]
    if batch < 2:
        raise ContractError("InfoNCE needs at least two pairs")
    logits = (anchors @ positives.swapaxes(0, 1)) * (1.0 / temperature)
    diagonal = (np.arange(batch), np.arange(batch))
    forward = -log_softmax(logits, axis=1)[diagonal].mean()
    if not symmetric:
        return forward
    backward = -log_softmax(logits, axis=0)[diagonal].mean()
    return (forward + backward) * 0.5


def triadic_loss(
    batches: dict[ModalityPair, tuple[Tensor, Tensor]], cfg: BindingConfig
) -> tuple[Tensor, dict[str, float]]:
    """
    Sum of InfoNCE over the active pairs present in `batches`

    Pairs that are inactive, or absent because too few samples carry that modality,
    contribute zero.

    Returns:
        (total loss tensor, per-pair float components)
    """
    if not cfg.active_pairs:
        raise ContractError("no modality pair is active")
    total: Tensor | None = None
    components: dict[str, float] = {}
    for pair in ModalityPair:
        if pair not in cfg.active_pairs or pair not in batches:
            continue
        anchors, positives = batches[pair]
        loss = info_nce_loss(anchors, positives, cfg.temperature, cfg.symmetric)
        components[pair.value] = loss.item()
        total = loss if total is None else total + loss
    if total is None:
        total = Tensor(0.0)
    return total, components


def emergent_alignment_score(
    text_embs: np.ndarray, audio_embs: np.ndarray, matched_index: np.ndarray | None = None
) -> float:
    """
    Mean cosine of matched (text, audio) pairs minus mean cosine of mismatched pairs

    Args:
        text_embs: (n, d) embeddings
        audio_embs: (n, d) embeddings
        matched_index: audio row matched to each text row (identity when omitted)
    """
    text_embs = np.asarray(text_embs, dtype=np.float64)
    audio_embs = np.asarray(audio_embs, dtype=np.float64)
    if text_embs.shape != audio_embs.shape:
        raise ContractError(f"embedding sets differ in shape: {text_embs.shape} vs {audio_embs.shape}")
    count = text_embs.shape[0]
    if count < 2:
        raise ContractError("alignment needs at least two items")
    match = np.arange(count) if matched_index is None else np.asarray(matched_index)
    is_index = match.shape == (count,) and np.issubdtype(match.dtype, np.integer)
    if not is_index or set(match.tolist()) != set(range(count)):
        raise ContractError(f"matched_index must be a permutation of 0..{count - 1}")
    t_norm = np.linalg.norm(text_embs, axis=1, keepdims=True)
    a_norm = np.linalg.norm(audio_embs, axis=1, keepdims=True)
    if np.any(t_norm == 0) or np.any(a_norm == 0):
        raise ContractError("cannot score a zero embedding")
    t = text_embs / t_norm
    a = audio_embs / a_norm
    cos = t @ a.T
    matched = np.zeros_like(cos, dtype=bool)
    matched[np.arange(count), match] = True
    return float(cos[matched].mean() - cos[~matched].mean())


class BindingService:
    """Assembles pair batches from per-modality embeddings"""

    def __init__(self, cfg: BindingConfig):
        self.cfg = cfg

    def pair_batches(
        self, text: Tensor, sign: Tensor, audio: Tensor | None, audio_rows: np.ndarray
    ) -> dict[ModalityPair, tuple[Tensor, Tensor]]:
        """
        Args:
            text: (B, d) raw text embeddings
            sign: (B, d) raw sign embeddings
            audio: (n_a, d) raw audio embeddings for the rows listed in `audio_rows`
            audio_rows: Batch rows that carry audio

        Returns:
            Normalized anchor/positive batches keyed by pair
        """
        views = {"text": normalize_rows(text), "sign": normalize_rows(sign)}
        batches: dict[ModalityPair, tuple[Tensor, Tensor]] = {}
        if text.shape[0] >= 2:
            batches[ModalityPair.TEXT_SIGN] = (views["text"], views["sign"])
        if audio is not None and len(audio_rows) >= 2:
            audio_view = normalize_rows(audio)
            rows = np.asarray(audio_rows)
            batches[ModalityPair.TEXT_AUDIO] = (views["text"][rows], audio_view)
            batches[ModalityPair.AUDIO_SIGN] = (audio_view, views["sign"][rows])
        return batches

    def loss(
        self, text: Tensor, sign: Tensor, audio: Tensor | None, audio_rows: np.ndarray
    ) -> tuple[Tensor, dict[str, float]]:
        return triadic_loss(self.pair_batches(text, sign, audio, audio_rows), self.cfg)

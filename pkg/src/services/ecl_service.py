"""
Embedding-consistency learning and the total training objective
"""

import math
from contextlib import nullcontext

import numpy as np

from src.autograd.layers import Module
from src.autograd.tensor import Tensor, l2_norm
from src.exceptions import ContractError, TrainingError
from src.models.reports import LossReport
from src.models.sequence import Embedding
from src.models.settings import EclConfig
from src.networks.model import PredictorModel
from src.services.diffusion_service import DiffusionService


def embedding_error(a: Embedding | np.ndarray, b: Embedding | np.ndarray) -> float:
    """Euclidean distance between two embeddings"""
    a_values = a.values if isinstance(a, Embedding) else np.asarray(a, dtype=np.float64)
    b_values = b.values if isinstance(b, Embedding) else np.asarray(b, dtype=np.float64)
    if a_values.shape != b_values.shape:
        raise ContractError(f"embedding lengths differ ({a_values.shape} vs {b_values.shape})")
    return float(np.linalg.norm(a_values - b_values))


def total_loss(
    l_d: float,
    l_ecl: float,
    l_nce: float,
    cfg: EclConfig,
    *,
    l_len: float = 0.0,
    l_map: float = 0.0,
    ecl_active: bool = True,
    **extra,
) -> LossReport:
    """
    Weighted sum lambda1 * l_d + lambda2 * l_ecl + lambda3 * l_nce

    The length-prediction term rides on lambda1 and the mapping regression on
    `mapping_aux_weight`. The consistency term counts only while `ecl_active`.

    Raises:
        TrainingError: naming the first non-finite component
    """
    components = (("l_d", l_d), ("l_ecl", l_ecl), ("l_nce", l_nce), ("l_len", l_len), ("l_map", l_map))
    for name, value in components:
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss component {name}={value}", component=name)
    total = cfg.lambda_diffusion * (l_d + l_len) + cfg.lambda_nce * l_nce + cfg.mapping_aux_weight * l_map
    if ecl_active:
        total += cfg.lambda_ecl * l_ecl
    return LossReport(
        l_d=l_d, l_ecl=l_ecl, l_nce=l_nce, l_len=l_len, l_map=l_map, ecl_active=ecl_active, total=total, **extra
    )


class EclService:
    """Consistency losses between generation streams, measured by the sign encoder"""

    def __init__(self, model: PredictorModel, diffusion: DiffusionService, cfg: EclConfig):
        self.model = model
        self.diffusion = diffusion
        self.cfg = cfg

    def _sign_scope(self):
        return self.model.encoders.sign.frozen() if self.cfg.freeze_sign_encoder else nullcontext()

    def _generate_embed(self, condition: Tensor, length: int, seed: int, valid: np.ndarray | None) -> Tensor:
        generated = self.diffusion.sample_differentiable(condition, length, seed, self.cfg.sampler_steps, valid)
        return self.model.encoders.sign(generated, valid)

    def triplet_loss(
        self, e_t: Tensor, e_a: Tensor, length: int, seed: int, valid: np.ndarray | None = None
    ) -> Tensor:
        """
        Mean over rows of ||E_s(G(e_a)) - E_s(G(e_t))||, both streams sharing `seed`

        Args:
            e_t, e_a: (B, d) text and audio conditioning embeddings
            length: Generated frame count (batch maximum)
            seed: Noise seed shared by both streams
            valid: Optional (B, length) mask of each row's real frames
        """
        if e_t.shape != e_a.shape:
            raise ContractError(f"condition shapes differ: {e_t.shape} vs {e_a.shape}")
        with self._sign_scope():
            from_text = self._generate_embed(e_t, length, seed, valid)
            from_audio = self._generate_embed(e_a, length, seed, valid)
        return l2_norm(from_audio - from_text, axis=-1).mean()

    def unpaired_loss(
        self,
        e_t: Tensor,
        length: int,
        seed: int,
        valid: np.ndarray | None = None,
        mapping: Module | None = None,
    ) -> Tensor:
        """
        Mean over rows of ||E_s(G(M(e_t))) - E_s(G(e_t))|| for text-only samples

        With `fidelity_order` the mapping is applied after the sign encoder instead:
        ||M(E_s(G(e_t))) - E_s(G(e_t))||.
        """
        mapping = mapping if mapping is not None else self.model.mapping
        with self._sign_scope():
            from_text = self._generate_embed(e_t, length, seed, valid)
            if self.cfg.fidelity_order:
                return l2_norm(mapping(from_text) - from_text, axis=-1).mean()
            from_pseudo = self._generate_embed(mapping(e_t), length, seed, valid)
        return l2_norm(from_pseudo - from_text, axis=-1).mean()

    def mapping_loss(self, e_t: Tensor, e_a: Tensor) -> Tensor:
        """Auxiliary regression ||M(e_t) - e_a|| anchoring the mapping to real audio embeddings"""
        return l2_norm(self.model.mapping(e_t.detach()) - e_a.detach(), axis=-1).mean()

    def active(self, epoch: int) -> bool:
        return epoch >= self.cfg.warmup_epochs

    def ecl_total(
        self,
        epoch: int,
        e_t: Tensor,
        e_a: Tensor | None,
        audio_rows: np.ndarray,
        length: int,
        valid: np.ndarray,
        seed: int,
    ) -> Tensor:
        """
        Mean triplet loss over audio rows plus mean unpaired loss over the rest; zero
        before `warmup_epochs`

        Args:
            epoch: Current epoch
            e_t: (B, d) text embeddings
            e_a: (n_a, d) audio embeddings of `audio_rows`, or None
            audio_rows: Batch rows that carry audio
            length: Batch frame count
            valid: (B, length) frame mask
            seed: Noise seed shared across streams
        """
        if not self.active(epoch):
            return Tensor(0.0, dtype=e_t.dtype)
        audio_rows = np.asarray(audio_rows, dtype=np.int64)
        text_rows = np.setdiff1d(np.arange(e_t.shape[0]), audio_rows)
        total: Tensor | None = None
        if e_a is not None and audio_rows.size:
            total = self.triplet_loss(e_t[audio_rows], e_a, length, seed, valid[audio_rows])
        if text_rows.size:
            unpaired = self.unpaired_loss(e_t[text_rows], length, seed, valid[text_rows])
            total = unpaired if total is None else total + unpaired
        return total if total is not None else Tensor(0.0, dtype=e_t.dtype)

"""
Causal sign producer, length predictor and text-to-audio mapping network
"""

import numpy as np

from src.autograd.functional import causal_mask
from src.autograd.layers import MLP, AttentionBlock, LayerNorm, Linear, Module
from src.autograd.tensor import Tensor, concat
from src.exceptions import ContractError
from src.networks.encoders import positional_encoding

CONDITION_SLOTS = 3


class SignProducer(Module):
    """
    Causal attention over [condition; step; noise; projected noisy frames]

    The three embeddings occupy the first positions; the last L positions are mapped by
    two fully connected layers to keypoint frames.
    """

    def __init__(
        self,
        frame_width: int,
        d_model: int,
        num_heads: int,
        hidden_dim: int,
        num_blocks: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.frame_proj = Linear(frame_width, d_model, rng, dtype)
        self.blocks = [AttentionBlock(d_model, num_heads, hidden_dim, rng, dtype) for _ in range(num_blocks)]
        self.norm = LayerNorm(d_model, dtype)
        self.head = MLP(d_model, hidden_dim, frame_width, rng, dtype)
        self.frame_width = frame_width
        self.d_model = d_model

    def forward(self, condition: Tensor, step: Tensor, noise: Tensor, frames: Tensor) -> Tensor:
        """
        Args:
            condition, step, noise: (B, d_model) embeddings
            frames: (B, L, frame_width) current noisy sequence

        Returns:
            (B, L, frame_width) predicted frames
        """
        batch, length, width = frames.shape
        if width != self.frame_width:
            raise ContractError(f"producer expects frames of width {self.frame_width}, got {width}")
        for name, emb in (("condition", condition), ("step", step), ("noise", noise)):
            if emb.shape != (batch, self.d_model):
                raise ContractError(f"{name} embedding has shape {emb.shape}, expected {(batch, self.d_model)}")
        slots = [emb.reshape(batch, 1, self.d_model) for emb in (condition, step, noise)]
        h = concat([*slots, self.frame_proj(frames)], axis=1)
        total = CONDITION_SLOTS + length
        h = h + positional_encoding(total, self.d_model).astype(h.dtype)
        mask = causal_mask(total)
        for block in self.blocks:
            h = block(h, mask)
        return self.head(self.norm(h[:, CONDITION_SLOTS:]))


class LengthPredictor(Module):
    """MLP from a conditioning embedding to the log frame count"""

    def __init__(self, d_model: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.mlp = MLP(d_model, hidden_dim, 1, rng, dtype)

    def forward(self, condition: Tensor) -> Tensor:
        return self.mlp(condition).reshape(condition.shape[0])


class MappingNetwork(Module):
    """Text embedding to pseudo-audio embedding"""

    def __init__(self, d_model: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.mlp = MLP(d_model, hidden_dim, d_model, rng, dtype)
        self.d_model = d_model

    def forward(self, text_embedding: Tensor) -> Tensor:
        if text_embedding.shape[-1] != self.d_model:
            raise ContractError(f"mapping network expects width {self.d_model}, got {text_embedding.shape}")
        return self.mlp(text_embedding)


class IdentityMapping(Module):
    """Pass-through mapping used to check consistency losses"""

    def forward(self, text_embedding: Tensor) -> Tensor:
        return text_embedding

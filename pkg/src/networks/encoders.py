"""
Attention encoders mapping feature sequences and diffusion steps to embeddings
"""

import numpy as np

from src.autograd.functional import masked_mean
from src.autograd.layers import MLP, AttentionBlock, LayerNorm, Linear, Module, key_padding_mask
from src.autograd.tensor import Parameter, Tensor
from src.exceptions import ContractError


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """
    Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/dim)), PE(pos, 2i+1) = cos(...)

    Args:
        length: Number of positions
        dim: Even model width

    Returns:
        length x dim float64 matrix
    """
    if dim % 2:
        raise ContractError(f"positional encoding width must be even, got {dim}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = 1.0 / 10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates)
    return table


class SequenceEncoder(Module):
    """Input projection, positional encoding, attention blocks, masked mean-pool, MLP"""

    def __init__(
        self,
        in_dim: int,
        d_model: int,
        num_heads: int,
        hidden_dim: int,
        num_blocks: int,
        rng: np.random.Generator,
        dtype=np.float32,
        use_positional_encoding: bool = True,
    ):
        self.input_proj = Linear(in_dim, d_model, rng, dtype)
        self.blocks = [AttentionBlock(d_model, num_heads, hidden_dim, rng, dtype) for _ in range(num_blocks)]
        self.norm = LayerNorm(d_model, dtype)
        self.head = MLP(d_model, hidden_dim, d_model, rng, dtype)
        self.in_dim = in_dim
        self.d_model = d_model
        self.use_positional_encoding = use_positional_encoding

    def forward(self, x: Tensor, valid: np.ndarray | None = None) -> Tensor:
        """
        Args:
            x: (B, L, in_dim) features
            valid: Optional (B, L) mask of real positions

        Returns:
            (B, d_model) raw embeddings
        """
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise ContractError(f"encoder expects (batch, length, {self.in_dim}) input, got {x.shape}")
        h = self.input_proj(x)
        if self.use_positional_encoding:
            h = h + positional_encoding(x.shape[1], self.d_model).astype(h.dtype)
        mask = key_padding_mask(valid) if valid is not None else None
        for block in self.blocks:
            h = block(h, mask)
        return self.head(masked_mean(self.norm(h), valid))


class StepEncoder(Module):
    """Learned table of H+1 step rows passed through the block stack as a length-1 sequence"""

    def __init__(
        self,
        num_steps: int,
        d_model: int,
        num_heads: int,
        hidden_dim: int,
        num_blocks: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.table = Parameter(rng.normal(0.0, 1.0, size=(num_steps + 1, d_model)), dtype=dtype)
        self.blocks = [AttentionBlock(d_model, num_heads, hidden_dim, rng, dtype) for _ in range(num_blocks)]
        self.norm = LayerNorm(d_model, dtype)
        self.head = MLP(d_model, hidden_dim, d_model, rng, dtype)
        self.num_steps = num_steps
        self.d_model = d_model

    def forward(self, steps: np.ndarray) -> Tensor:
        steps = np.asarray(steps, dtype=np.int64).reshape(-1)
        out_of_range = steps[(steps < 0) | (steps > self.num_steps)]
        if out_of_range.size:
            raise ContractError(f"diffusion step {int(out_of_range[0])} outside 0..{self.num_steps}")
        h = self.table[steps].reshape(steps.shape[0], 1, self.d_model)
        for block in self.blocks:
            h = block(h)
        return self.head(self.norm(h).reshape(steps.shape[0], self.d_model))


class EncoderStack(Module):
    """The five encoders; each owns its own parameters"""

    def __init__(self, config, rng: np.random.Generator, dtype=np.float32):
        frame_width = config.num_joints * config.num_coords
        common = {
            "d_model": config.d_model,
            "num_heads": config.num_heads,
            "hidden_dim": config.mlp_hidden,
            "num_blocks": config.encoder_blocks,
            "rng": rng,
            "dtype": dtype,
        }
        pe = config.use_positional_encoding
        self.text = SequenceEncoder(config.d_text_feature, use_positional_encoding=pe, **common)
        self.audio = SequenceEncoder(config.d_audio_feature, use_positional_encoding=pe, **common)
        self.sign = SequenceEncoder(frame_width, use_positional_encoding=pe, **common)
        self.step = StepEncoder(config.diffusion_steps, **common)
        self.noise = SequenceEncoder(frame_width, use_positional_encoding=pe, **common)

"""
Parameter containers and attention building blocks
"""

import math
from collections.abc import Iterator
from contextlib import contextmanager

import numpy as np

from src.autograd.functional import layer_norm, scaled_dot_attention
from src.autograd.tensor import Parameter, Tensor
from src.exceptions import CheckpointError, DimensionError


class Module:
    """Base class that discovers Parameters and sub-Modules through attributes"""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for param in self.parameters().values():
            param.grad = None

    @contextmanager
    def frozen(self) -> Iterator[None]:
        """Temporarily stop gradients from reaching this module's parameters"""
        params = list(self.parameters().values())
        previous = [p.requires_grad for p in params]
        for p in params:
            p.requires_grad = False
        try:
            yield
        finally:
            for p, flag in zip(params, previous, strict=True):
                p.requires_grad = flag

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise CheckpointError("missing parameter", missing[0])
        for name, param in params.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(f"shape {value.shape} does not match {param.shape}", name)
            param.data = value.astype(param.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        scale = 1.0 / math.sqrt(in_dim)
        self.weight = Parameter(rng.normal(0.0, scale, size=(in_dim, out_dim)), dtype=dtype)
        self.bias = Parameter(np.zeros(out_dim), dtype=dtype) if bias else None
        self.in_dim = in_dim
        self.out_dim = out_dim

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"Linear expects width {self.in_dim}", x.shape)
        if x.ndim == 1:
            out = (x.reshape(1, self.in_dim) @ self.weight).reshape(self.out_dim)
        else:
            out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim), dtype=dtype)
        self.bias = Parameter(np.zeros(dim), dtype=dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Two fully connected layers with a GELU in between"""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.fc1 = Linear(in_dim, hidden_dim, rng, dtype)
        self.fc2 = Linear(hidden_dim, out_dim, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class MultiHeadAttention(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, dtype=np.float32):
        if dim % num_heads:
            raise DimensionError(f"model width {dim} is not divisible by {num_heads} heads")
        self.qkv = Linear(dim, 3 * dim, rng, dtype)
        self.proj = Linear(dim, dim, rng, dtype)
        self.num_heads = num_heads
        self.dim = dim

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        batch, length, _ = x.shape
        head_dim = self.dim // self.num_heads
        qkv = self.qkv(x).reshape(batch, length, 3, self.num_heads, head_dim).transpose(2, 0, 3, 1, 4)
        attended = scaled_dot_attention(qkv[0], qkv[1], qkv[2], mask)
        merged = attended.transpose(0, 2, 1, 3).reshape(batch, length, self.dim)
        return self.proj(merged)


class AttentionBlock(Module):
    """Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x))"""

    def __init__(self, dim: int, num_heads: int, hidden_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.norm1 = LayerNorm(dim, dtype)
        self.attn = MultiHeadAttention(dim, num_heads, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.mlp = MLP(dim, hidden_dim, dim, rng, dtype)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), mask)
        return x + self.mlp(self.norm2(x))


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """(B, L) key validity to a (B, 1, L, L) attention mask"""
    valid = np.asarray(valid, dtype=bool)
    batch, length = valid.shape
    return np.broadcast_to(valid[:, None, None, :], (batch, 1, length, length))

"""
Neural-network functions built from Tensor operations
"""

import math

import numpy as np

from src.autograd.tensor import Tensor, log_softmax, softmax
from src.exceptions import ContractError, DimensionError

__all__ = [
    "causal_mask",
    "cross_entropy",
    "layer_norm",
    "log_softmax",
    "masked_mean",
    "masked_mse",
    "scaled_dot_attention",
    "softmax",
]


def causal_mask(n: int) -> np.ndarray:
    """
    Boolean attention mask where position i may attend to j iff j <= i

    Args:
        n: Sequence length

    Returns:
        n x n boolean matrix (True = allowed)
    """
    if n < 1:
        raise DimensionError(f"causal mask needs n >= 1, got {n}")
    return np.tril(np.ones((n, n), dtype=bool))


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """
    softmax(q kᵀ / sqrt(d_k) + bias) v, with -inf bias on blocked positions

    Leading axes are batch axes. `mask` is True where attention is allowed; its last two
    axes must be (len_q, len_k) and leading axes broadcast against the scores.
    """
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError("query and key widths differ", q.shape, k.shape)
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError("key and value lengths differ", k.shape, v.shape)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim < 2 or mask.shape[-2:] != scores.shape[-2:]:
            raise DimensionError("attention mask does not match (len_q, len_k)", mask.shape, scores.shape[-2:])
        scores = scores.masked_fill(~mask, -np.inf)
    return softmax(scores, axis=-1) @ v


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    width = x.shape[-1] if x.ndim else 0
    if width == 0:
        raise DimensionError("layer norm over an empty axis", x.shape)
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError("layer norm affine parameters do not match last axis", x.shape, gain.shape, bias.shape)
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias


def masked_mean(x: Tensor, mask: np.ndarray | None) -> Tensor:
    """Mean over the sequence axis (-2) of (B, L, D) honoring a (B, L) validity mask"""
    if mask is None:
        return x.mean(axis=-2)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:-1]:
        raise DimensionError("pooling mask does not match sequence", mask.shape, x.shape)
    counts = mask.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ContractError("pooling over a sequence with no valid positions")
    weights = mask[..., None].astype(x.dtype)
    return (x * weights).sum(axis=-2) / counts.astype(x.dtype)


def masked_mse(pred: Tensor, target: Tensor | np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """
    Mean over samples of each sample's mean squared error on its valid frames

    Args:
        pred: (B, L, ...) predictions
        target: same shape as pred
        mask: (B, L) frame validity; None means every frame is valid

    Returns:
        Scalar tensor
    """
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target.shape:
        raise ContractError(f"prediction shape {pred.shape} differs from target shape {target.shape}")
    diff = pred - target
    sq = diff * diff
    per_frame = sq.reshape(pred.shape[0], pred.shape[1], -1).mean(axis=-1)
    if mask is None:
        return per_frame.mean()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape[:2]:
        raise DimensionError("loss mask does not match batch", mask.shape, pred.shape[:2])
    counts = mask.sum(axis=1).astype(pred.dtype)
    if np.any(counts == 0):
        raise ContractError("sample with no valid frames in loss")
    per_sample = (per_frame * mask.astype(pred.dtype)).sum(axis=1) / counts
    return per_sample.mean()


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean token cross-entropy of (..., V) logits against integer targets"""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise DimensionError("targets do not match logits", targets.shape, logits.shape)
    log_probs = log_softmax(logits, axis=-1)
    flat = log_probs.reshape(-1, logits.shape[-1])
    picked = flat[np.arange(flat.shape[0]), targets.reshape(-1)]
    if mask is None:
        return -picked.mean()
    weights = np.asarray(mask, dtype=logits.dtype).reshape(-1)
    total = float(weights.sum())
    if total == 0:
        raise ContractError("cross-entropy over an empty mask")
    return -(picked * weights).sum() * (1.0 / total)

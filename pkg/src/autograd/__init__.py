"""
Tensor core: automatic differentiation, attention blocks, optimizer and EMA
"""

from src.autograd.ema import EmaState, ExponentialMovingAverage, ema_update
from src.autograd.functional import causal_mask, layer_norm, masked_mse, scaled_dot_attention
from src.autograd.layers import MLP, AttentionBlock, LayerNorm, Linear, Module
from src.autograd.optim import Adam, OptimizerState, adam_step
from src.autograd.tensor import (
    ComputationTape,
    Parameter,
    Tensor,
    concat,
    l2_norm,
    log_softmax,
    no_grad,
    softmax,
    stack,
)

__all__ = [
    "MLP",
    "Adam",
    "AttentionBlock",
    "ComputationTape",
    "EmaState",
    "ExponentialMovingAverage",
    "LayerNorm",
    "Linear",
    "Module",
    "OptimizerState",
    "Parameter",
    "Tensor",
    "adam_step",
    "causal_mask",
    "concat",
    "ema_update",
    "l2_norm",
    "layer_norm",
    "log_softmax",
    "masked_mse",
    "no_grad",
    "scaled_dot_attention",
    "softmax",
    "stack",
]

"""
Adaptive-moment optimizer
"""

from dataclasses import dataclass, field

import numpy as np

from src.autograd.tensor import Tensor
from src.exceptions import ContractError


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: OptimizerState) -> OptimizerState:
    """
    Apply one bias-corrected Adam update in place

    Args:
        params: Named parameters whose `.grad` has been populated
        state: Moment accumulators, updated in place

    Returns:
        The same state with the step counter incremented
    """
    for name, param in params.items():
        if param.grad is None:
            raise ContractError(f"parameter '{name}' has no gradient")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, param in params.items():
        m = state.first_moment.setdefault(name, np.zeros_like(param.data))
        v = state.second_moment.setdefault(name, np.zeros_like(param.data))
        if m.shape != param.shape or v.shape != param.shape:
            raise ContractError(f"moment shape {m.shape} does not match parameter '{name}' {param.shape}")
        grad = param.grad
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        update = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data = (param.data - update).astype(param.dtype)
    return state


class Adam:
    """Optimizer over a fixed set of named parameters"""

    def __init__(
        self,
        params: dict[str, Tensor],
        learning_rate: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.state = OptimizerState(learning_rate=learning_rate, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        """Reset every gradient to zeros so untouched parameters still step cleanly"""
        for param in self.params.values():
            param.grad = np.zeros_like(param.data)

    def step(self) -> None:
        adam_step(self.params, self.state)

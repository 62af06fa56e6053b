"""
Exponential moving average of model parameters
"""

from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from src.autograd.tensor import Tensor
from src.exceptions import ContractError


@dataclass
class EmaState:
    decay: float = 0.999
    shadow: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ContractError(f"EMA decay must lie in (0, 1), got {self.decay}")


def ema_update(state: EmaState, live_params: dict[str, Tensor]) -> EmaState:
    """shadow <- decay * shadow + (1 - decay) * live, per element"""
    for name, param in live_params.items():
        shadow = state.shadow.get(name)
        if shadow is None or shadow.shape != param.shape:
            raise ContractError(f"EMA shadow for '{name}' does not mirror the live parameter")
    for name, param in live_params.items():
        shadow = state.shadow[name]
        shadow *= state.decay
        shadow += (1.0 - state.decay) * param.data
    return state


class ExponentialMovingAverage:
    """Shadow weights tracked alongside a parameter set"""

    def __init__(self, params: dict[str, Tensor], decay: float = 0.999):
        self.params = params
        self.state = EmaState(decay=decay, shadow={name: p.data.copy() for name, p in params.items()})

    def update(self) -> None:
        ema_update(self.state, self.params)

    @contextmanager
    def applied(self) -> Iterator[None]:
        """Swap the shadow weights into the live parameters for the duration of the block"""
        backup = {name: p.data for name, p in self.params.items()}
        for name, param in self.params.items():
            param.data = self.state.shadow[name].copy()
        try:
            yield
        finally:
            for name, param in self.params.items():
                param.data = backup[name]

"""
AdamW over parameter groups with a linear warmup to a constant rate
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor
from ..errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ParamGroup:
    name: str
    params: List[Tensor]
    weight_decay: float = 0.0


@dataclass
class _Moments:
    m: np.ndarray
    v: np.ndarray


@dataclass
class AdamW:
    """Adam moments with decoupled weight decay.

    The rate at update t (1-based) is ``lr * min(1, t / warmup_steps)``.
    Parameters without a gradient are left untouched.
    """
    groups: Sequence[ParamGroup]
    lr: float
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    warmup_steps: int = 0
    t: int = 0
    _state: Dict[int, _Moments] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not (0.0 <= self.betas[0] < 1.0 and 0.0 <= self.betas[1] < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        for group in self.groups:
            if group.weight_decay < 0:
                raise ConfigError(f"weight decay of group '{group.name}' must be >= 0")

    def lr_at(self, t: int) -> float:
        if self.warmup_steps == 0:
            return self.lr
        return self.lr * min(1.0, t / self.warmup_steps)

    @property
    def current_lr(self) -> float:
        return self.lr_at(max(self.t, 1))

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group.params:
                p.zero_grad()

    def step(self) -> float:
        """Apply one update; returns the rate used"""
        self.t += 1
        lr = self.lr_at(self.t)
        b1, b2 = self.betas
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for group in self.groups:
            for p in group.params:
                if p.grad is None:
                    continue
                g = p.grad
                state = self._state.get(id(p))
                if state is None:
                    state = self._state[id(p)] = _Moments(np.zeros_like(p.data), np.zeros_like(p.data))
                state.m = b1 * state.m + (1.0 - b1) * g
                state.v = b2 * state.v + (1.0 - b2) * g * g
                if lr == 0.0:
                    continue
                if group.weight_decay:
                    p.data -= lr * group.weight_decay * p.data
                p.data -= lr * (state.m / correction1) / (np.sqrt(state.v / correction2) + self.eps)
        return lr


def grad_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..errors import ShapeError

ACTION_BOUND = 1.0


@dataclass
class NoisyAction:
    """a_k: the action sample at denoising step k (k = 0 is clean)"""
    value: Tensor
    k: int


@dataclass
class ActionChunk:
    """Velocity commands [horizon, action_dim], clipped to [-1, 1]"""
    value: np.ndarray

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ShapeError(f"action chunk must be [horizon, action_dim], got {list(self.value.shape)}")

    @classmethod
    def clipped(cls, value: np.ndarray) -> "ActionChunk":
        return cls(np.clip(value, -ACTION_BOUND, ACTION_BOUND))

    @classmethod
    def zeros(cls, horizon: int, action_dim: int) -> "ActionChunk":
        return cls(np.zeros((horizon, action_dim)))

    @property
    def horizon(self) -> int:
        return int(self.value.shape[0])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.value)))

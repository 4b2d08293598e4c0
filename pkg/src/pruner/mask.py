"""
Pruning mask over all (denoising step, block) units

Rows are in execution order: row ``r`` holds the decisions for denoising step
``k = K - r``, so row 0 is the first step executed from pure noise. Columns
are flat block indices ``b = 3 * layer + type`` with type 0/1/2 for
self-attention / cross-attention / feed-forward. A 1 means the block's
computation is skipped and replaced by the reuse buffer.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ShapeError

BLOCK_TYPES = ("SA", "CA", "FFN")

LEARNED = "learned"
BASELINE = "baseline"


def step_to_row(k: int, K: int) -> int:
    return K - k


def row_to_step(row: int, K: int) -> int:
    return K - row


@dataclass
class PruneMask:
    hard: np.ndarray
    soft: np.ndarray
    source: str = BASELINE

    def __post_init__(self):
        self.hard = np.asarray(self.hard, dtype=np.int8)
        self.soft = np.asarray(self.soft, dtype=np.float64)
        if self.hard.ndim != 2 or self.hard.shape != self.soft.shape:
            raise ShapeError(f"mask hard {list(self.hard.shape)} and soft {list(self.soft.shape)} must be equal 2-D grids")
        if not np.isin(self.hard, (0, 1)).all():
            raise ShapeError("hard mask entries must be 0 or 1")

    @classmethod
    def from_hard(cls, hard: np.ndarray, source: str = BASELINE) -> "PruneMask":
        hard = np.asarray(hard, dtype=np.int8)
        return cls(hard=hard, soft=hard.astype(np.float64), source=source)

    @classmethod
    def dense(cls, K: int, n_blocks: int) -> "PruneMask":
        return cls.from_hard(np.zeros((K, n_blocks), dtype=np.int8))

    @property
    def K(self) -> int:
        return int(self.hard.shape[0])

    @property
    def n_blocks(self) -> int:
        return int(self.hard.shape[1])

    @property
    def realized_rate(self) -> float:
        return float(self.hard.mean())

    @property
    def soft_rate(self) -> float:
        return float(self.soft.mean())

    def row(self, k: int) -> np.ndarray:
        """Decisions for denoising step k (1-based, k = K is executed first)"""
        return self.hard[step_to_row(k, self.K)]

    def check_shape(self, K: int, n_blocks: int) -> None:
        if self.hard.shape != (K, n_blocks):
            raise ShapeError(f"mask shape {list(self.hard.shape)} does not match [K={K}, 3L={n_blocks}]")

    def is_consistent(self) -> bool:
        """hard == 1 implies soft >= 0.5 everywhere"""
        return bool(np.all(self.soft[self.hard == 1] >= 0.5))

    def with_source(self, source: Optional[str]) -> "PruneMask":
        return PruneMask(hard=self.hard.copy(), soft=self.soft.copy(), source=source or self.source)

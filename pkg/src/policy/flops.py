"""
Analytic FLOP accounting for one action generation

A multiply-add counts as 2 FLOPs. Counted: every linear map (including the
key/value projections of the cross-attention memory) and both attention
products. Normalization, activations, softmax and residual adds are not
counted; neither is the timestep-table lookup.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..pruner.flops import pruner_flops as count_pruner_flops
from ..pruner.mask import BLOCK_TYPES, PruneMask
from .config import ModelConfig


@dataclass
class FlopReport:
    dense_flops: int
    executed_flops: int
    pruner_flops: int
    per_block: np.ndarray
    realized_rate: float

    @property
    def executed_block_flops(self) -> int:
        return int(self.per_block.sum())

    @property
    def total_flops(self) -> int:
        return self.executed_flops + self.pruner_flops

    @property
    def flop_factor(self) -> float:
        """dense / (executed + pruner)"""
        return self.dense_flops / self.total_flops


def block_flops(config: ModelConfig) -> Dict[str, int]:
    """FLOPs of one execution of each block type"""
    T, d, S = config.horizon, config.d_model, config.memory_tokens
    return {
        "SA": 4 * 2 * T * d * d + 2 * 2 * T * T * d,
        "CA": 2 * 2 * T * d * d + 2 * 2 * S * d * d + 2 * 2 * T * S * d,
        "FFN": 2 * 2 * T * d * config.d_ffn,
    }


def step_overhead_flops(config: ModelConfig) -> int:
    """Action embedding and output head, paid at every denoising step"""
    return 2 * config.horizon * config.action_dim * config.d_model * 2


def generation_overhead_flops(config: ModelConfig) -> int:
    """Everything outside the prunable blocks for one full generation"""
    return config.K * step_overhead_flops(config) + 2 * config.obs_dim * config.d_model


def block_flop_grid(config: ModelConfig) -> np.ndarray:
    """[K, 3L] FLOPs of every unit when computed"""
    per_type = block_flops(config)
    row = np.array([per_type[BLOCK_TYPES[b % 3]] for b in range(config.n_blocks)], dtype=np.int64)
    return np.tile(row, (config.K, 1))


def flop_count(config: ModelConfig, mask: Optional[PruneMask] = None, pruner_config=None) -> FlopReport:
    grid = block_flop_grid(config)
    if mask is None:
        hard = np.zeros_like(grid)
    else:
        mask.check_shape(config.K, config.n_blocks)
        hard = mask.hard.astype(np.int64)
    per_block = grid * (1 - hard)
    overhead = generation_overhead_flops(config)
    return FlopReport(
        dense_flops=int(grid.sum()) + overhead,
        executed_flops=int(per_block.sum()) + overhead,
        pruner_flops=count_pruner_flops(pruner_config) if pruner_config is not None else 0,
        per_block=per_block,
        realized_rate=float(hard.mean()),
    )

"""
Mask patterns and realized pruning rates along rollouts
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..env.push_env import EnvConfig
from ..env.rollout import PolicyFn, rollout_episode, run_episodes
from ..pruner.mask import BLOCK_TYPES, row_to_step
from .heatmaps import write_heatmap

logger = logging.getLogger(__name__)

RATE_TRACE_COLUMNS = ["env_seed", "iteration", "realized_rate", "executed_flops", "success_so_far"]


def block_labels(n_blocks: int) -> List[str]:
    return [f"L{b // 3}.{BLOCK_TYPES[b % 3]}" for b in range(n_blocks)]


def sparsity_dump(policy: PolicyFn, env_seed: int, max_iterations: int, config: EnvConfig = EnvConfig(),
                  out_dir: Optional[Union[str, Path]] = None) -> List[np.ndarray]:
    """Hard K x 3L mask of every iteration of one episode (1 = skipped, drawn light)"""
    _, trace = rollout_episode(policy, env_seed, max_iterations, config=config)
    pairs = [(record, record.mask.hard.copy()) for record in trace.records if record.mask is not None]
    grids = [grid for _, grid in pairs]
    if out_dir is not None:
        for record, grid in pairs:
            K = grid.shape[0]
            write_heatmap(grid, Path(out_dir) / f"mask_iter{record.iteration:03d}", 0.0, 1.0,
                          [f"k{row_to_step(r, K)}" for r in range(K)], block_labels(grid.shape[1]), "step")
        logger.info(f"Wrote {len(grids)} mask grids to {out_dir}")
    return grids


@dataclass
class RateTrace:
    frame: pd.DataFrame
    rho: Optional[float] = None

    @property
    def max_deviation(self) -> float:
        if self.rho is None or self.frame.empty:
            return float("nan")
        return float((self.frame["realized_rate"] - self.rho).abs().max())

    @property
    def mean_rate(self) -> float:
        return float(self.frame["realized_rate"].mean()) if not self.frame.empty else float("nan")

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, float_format="%.6f")
        return path


def rate_trace(policy: PolicyFn, env_seeds: Sequence[int], max_iterations: int, rho: Optional[float] = None,
               config: EnvConfig = EnvConfig(), workers: int = 1, progress: bool = False) -> RateTrace:
    """Per-iteration realized hard rate over a suite of episodes"""
    frames = []
    for (episode, trace) in run_episodes(policy, env_seeds, max_iterations, None, config, workers, progress):
        frame = trace.to_frame()
        frame.insert(0, "env_seed", episode.env_seed)
        frames.append(frame)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=RATE_TRACE_COLUMNS)
    return RateTrace(frame[RATE_TRACE_COLUMNS], rho)

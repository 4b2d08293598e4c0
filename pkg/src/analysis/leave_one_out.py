"""
Leave-one-out schedule sweep

Each fixed schedule replaces the policy's own mask at exactly one rollout
iteration; every other iteration runs unchanged. The grid of success rates
shows which schedule suits which phase of the task.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..caching import Schedule
from ..env.push_env import EnvConfig
from ..env.rollout import MaskOverride, PolicyFn, run_episodes, success_rate
from ..errors import AnalysisError, ConfigError
from .heatmaps import write_heatmap

logger = logging.getLogger(__name__)


@dataclass
class LeaveOneOutGrid:
    schedules: List[str]
    iterations: List[int]
    success: np.ndarray        # [n_schedules, n_iterations]
    baseline: float
    n_episodes: int

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.success, columns=[f"it{i}" for i in self.iterations])
        frame.insert(0, "schedule", self.schedules)
        return frame

    def best_schedule_per_iteration(self) -> List[str]:
        return [self.schedules[int(np.argmax(self.success[:, j]))] for j in range(len(self.iterations))]

    def single_schedule_dominates(self) -> bool:
        """True if one schedule is at least as good as every other at every iteration"""
        best = self.success.max(axis=0)
        return bool(np.any(np.all(self.success >= best, axis=1)))

    def binomial_sigma(self) -> float:
        p = self.baseline
        return float(np.sqrt(p * (1.0 - p) / self.n_episodes)) if self.n_episodes else 0.0


def leave_one_out(policy: PolicyFn, schedules: Sequence[Schedule], iteration_range: Sequence[int],
                  env_seeds: Sequence[int], max_iterations: int, config: EnvConfig = EnvConfig(),
                  workers: int = 1, progress: bool = False) -> LeaveOneOutGrid:
    if not schedules:
        raise AnalysisError("leave-one-out needs at least one schedule")
    iterations = [int(i) for i in iteration_range]
    for i in iterations:
        if not 0 <= i < max_iterations:
            raise ConfigError(f"iteration {i} outside [0, {max_iterations})")

    baseline = success_rate(run_episodes(policy, env_seeds, max_iterations, None, config, workers, progress))
    logger.info(f"Leave-one-out baseline success {baseline:.3f} over {len(env_seeds)} episodes")
    success = np.zeros((len(schedules), len(iterations)))
    for s, schedule in enumerate(schedules):
        for j, it in enumerate(iterations):
            results = run_episodes(policy, env_seeds, max_iterations, MaskOverride(it, schedule.mask), config,
                                   workers, progress)
            success[s, j] = success_rate(results)
        logger.info(f"Schedule {schedule.name}: " + " ".join(f"{v:.2f}" for v in success[s]))
    return LeaveOneOutGrid([s.name for s in schedules], iterations, success, baseline, len(env_seeds))


def write_leave_one_out(grid: LeaveOneOutGrid, out_dir: Union[str, Path],
                        stem: Optional[str] = "leave_one_out") -> List[Path]:
    paths = write_heatmap(grid.success, Path(out_dir) / stem, 0.0, 1.0, grid.schedules,
                          [f"it{i}" for i in grid.iterations], "schedule")
    return list(paths)

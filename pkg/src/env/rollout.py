"""
Closed-loop rollouts: observe -> generate a chunk -> execute, until success
or the iteration limit

A policy is any callable ``policy(obs, mask_override=None, rng_seed=0)``
returning ``(ActionChunk, FlopReport or None, PruneMask or None)``. The
override hook hands a fixed mask to the policy at exactly one iteration.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..errors import ConfigError, SagError
from ..policy.types import ActionChunk
from ..pruner.mask import PruneMask
from .push_env import EnvConfig, Observation, env_step, reset

logger = logging.getLogger(__name__)

PolicyFn = Callable[..., Tuple[ActionChunk, Optional[object], Optional[PruneMask]]]

TRACE_COLUMNS = ["iteration", "realized_rate", "executed_flops", "success_so_far"]


@dataclass
class MaskOverride:
    """Replace the policy's mask at one rollout iteration (0-based)"""
    iteration: int
    mask: PruneMask


@dataclass
class IterationRecord:
    iteration: int
    observation: Observation
    mask: Optional[PruneMask]
    realized_rate: float
    executed_flops: int
    pruner_flops: int
    action: ActionChunk
    success_so_far: bool


@dataclass
class RolloutTrace:
    records: List[IterationRecord] = field(default_factory=list)

    @property
    def realized_rates(self) -> np.ndarray:
        return np.array([r.realized_rate for r in self.records])

    @property
    def masks(self) -> List[Optional[PruneMask]]:
        return [r.mask for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.iteration, r.realized_rate, r.executed_flops, int(r.success_so_far)] for r in self.records],
            columns=TRACE_COLUMNS,
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.6f")
        return path


@dataclass
class Episode:
    env_seed: int
    steps: List[Tuple[Observation, ActionChunk]] = field(default_factory=list)
    success: bool = False
    error: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.steps)


def iteration_seed(env_seed: int, iteration: int) -> int:
    """Sampling seed for one rollout iteration"""
    return int(np.random.SeedSequence([int(env_seed), int(iteration)]).generate_state(1)[0])


def evaluation_seeds(seed: int, n_episodes: int) -> List[int]:
    """Environment seeds of an evaluation suite, disjoint in stream from demonstration seeds"""
    rng = np.random.default_rng([int(seed), 1])
    return [int(s) for s in rng.integers(0, 2**31 - 1, size=n_episodes)]


def rollout_episode(policy: PolicyFn, env_seed: int, max_iterations: int,
                    override: Optional[MaskOverride] = None,
                    config: EnvConfig = EnvConfig()) -> Tuple[Episode, RolloutTrace]:
    if override is not None and not 0 <= override.iteration < max_iterations:
        raise ConfigError(f"override iteration {override.iteration} outside [0, {max_iterations})")
    state, obs = reset(env_seed, config)
    episode = Episode(env_seed=env_seed)
    trace = RolloutTrace()
    for it in range(max_iterations):
        mask_override = override.mask if override is not None and override.iteration == it else None
        try:
            chunk, report, mask = policy(obs, mask_override=mask_override, rng_seed=iteration_seed(env_seed, it))
            next_state, next_obs = env_step(state, chunk)
        except SagError as exc:
            logger.warning(f"Episode {env_seed} failed at iteration {it}: {exc}")
            episode.error = str(exc)
            episode.success = False
            break
        episode.steps.append((obs, chunk))
        trace.records.append(IterationRecord(
            iteration=it,
            observation=obs,
            mask=mask,
            realized_rate=report.realized_rate if report is not None else 0.0,
            executed_flops=report.executed_flops if report is not None else 0,
            pruner_flops=report.pruner_flops if report is not None else 0,
            action=chunk,
            success_so_far=next_state.success,
        ))
        state, obs = next_state, next_obs
        if state.success:
            episode.success = True
            break
    return episode, trace


def run_episodes(policy: PolicyFn, env_seeds: Sequence[int], max_iterations: int,
                 override: Optional[MaskOverride] = None, config: EnvConfig = EnvConfig(),
                 workers: int = 1, progress: bool = False) -> List[Tuple[Episode, RolloutTrace]]:
    """Independent episodes, optionally on a thread pool; results keep the seed order"""
    def run(seed: int) -> Tuple[Episode, RolloutTrace]:
        return rollout_episode(policy, seed, max_iterations, override, config)

    seeds = [int(s) for s in env_seeds]
    if workers <= 1:
        return [run(s) for s in tqdm(seeds, desc="Episodes", disable=not progress)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(run, seeds), total=len(seeds), desc="Episodes", disable=not progress))


def success_rate(results: Sequence[Tuple[Episode, RolloutTrace]]) -> float:
    if not results:
        return 0.0
    return float(np.mean([episode.success for episode, _ in results]))

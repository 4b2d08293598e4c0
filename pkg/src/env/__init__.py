from .demos import VALIDATION, TRAIN, Dataset, generate_demos, load_dataset, save_dataset
from .expert import ExpertPolicy, expert_action, expert_velocity, waypoint
from .push_env import (
    OBS_DIM,
    EnvConfig,
    EnvState,
    Observation,
    env_step,
    project_free,
    reset,
    state_from_observation,
    substep,
)
from .rollout import (
    TRACE_COLUMNS,
    Episode,
    IterationRecord,
    MaskOverride,
    RolloutTrace,
    evaluation_seeds,
    iteration_seed,
    rollout_episode,
    run_episodes,
    success_rate,
)

__all__ = [
    'OBS_DIM',
    'TRACE_COLUMNS',
    'TRAIN',
    'VALIDATION',
    'Dataset',
    'EnvConfig',
    'EnvState',
    'Episode',
    'ExpertPolicy',
    'IterationRecord',
    'MaskOverride',
    'Observation',
    'RolloutTrace',
    'env_step',
    'evaluation_seeds',
    'expert_action',
    'expert_velocity',
    'generate_demos',
    'iteration_seed',
    'load_dataset',
    'project_free',
    'reset',
    'rollout_episode',
    'run_episodes',
    'save_dataset',
    'state_from_observation',
    'substep',
    'success_rate',
    'waypoint',
]

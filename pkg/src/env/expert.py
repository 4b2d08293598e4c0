"""
Scripted bimodal expert

Proportional controller with three phases: reach the object, carry it to a
waypoint above (even mode) or below (odd mode) the obstacle, then drive it
to the goal. Velocities are norm-clipped to 1.
"""

import numpy as np

from config import settings
from ..policy.types import ActionChunk
from .push_env import EnvConfig, EnvState, Observation, state_from_observation, substep

GAIN = settings.EXPERT_GAIN


def waypoint(mode_seed: int) -> np.ndarray:
    side = 1.0 if mode_seed % 2 == 0 else -1.0
    return np.array([settings.WAYPOINT_X, side * settings.WAYPOINT_Y])


def expert_velocity(state: EnvState, mode_seed: int) -> np.ndarray:
    if not state.attached:
        v = GAIN * (state.obj - state.agent)
    elif state.obj[0] < 0.0:
        v = GAIN * (waypoint(mode_seed) - state.agent)
    else:
        v = GAIN * (state.goal - state.obj)
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 1.0 else v


def expert_action(state: EnvState, mode_seed: int) -> ActionChunk:
    """Chunk obtained by running the controller on a copy of ``state`` for one horizon"""
    sim = state.copy()
    rows = []
    for _ in range(sim.config.horizon):
        v = expert_velocity(sim, mode_seed)
        rows.append(v)
        substep(sim, v)
    return ActionChunk.clipped(np.stack(rows))


class ExpertPolicy:
    """Expert wrapped as a rollout policy acting on observations"""

    def __init__(self, mode_seed: int, config: EnvConfig = EnvConfig()):
        self.mode_seed = mode_seed
        self.config = config

    def __call__(self, obs: Observation, mask_override=None, rng_seed: int = 0):
        state = state_from_observation(obs, self.config)
        return expert_action(state, self.mode_seed), None, None

"""
2-D push-to-goal task with a central obstacle

The workspace is [-1, 1]^2 with a disc obstacle at the origin. The agent
moves kinematically (position += dt * velocity per sub-step) and is projected
out of the disc. Once the agent comes within the grasp radius of the object
they stay attached and the object moves by the agent's displacement. The task
succeeds when the object is within the success radius of the goal; the flag
never resets within an episode.

Observation vector: agent (2), object (2), goal (2), contact, normalized time.
"""

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from config import settings
from ..errors import ConfigError, PolicyDivergenceError, ShapeError
from ..policy.types import ActionChunk

OBS_DIM = 8


@dataclass(frozen=True)
class EnvConfig:
    dt: float = settings.DT
    horizon: int = settings.HORIZON
    max_iterations: int = settings.MAX_ITERATIONS
    success_radius: float = settings.SUCCESS_RADIUS
    grasp_radius: float = settings.GRASP_RADIUS
    obstacle_radius: float = settings.OBSTACLE_RADIUS

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 1 or self.max_iterations < 1:
            raise ConfigError("dt, horizon and max_iterations must be positive")

    @property
    def max_steps(self) -> int:
        return self.max_iterations * self.horizon


@dataclass
class Observation:
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.shape != (OBS_DIM,):
            raise ShapeError(f"observation must have {OBS_DIM} entries, got {list(self.vector.shape)}")

    @property
    def agent(self) -> np.ndarray:
        return self.vector[0:2]

    @property
    def obj(self) -> np.ndarray:
        return self.vector[2:4]

    @property
    def goal(self) -> np.ndarray:
        return self.vector[4:6]

    @property
    def contact(self) -> bool:
        return bool(self.vector[6] > 0.5)

    @property
    def time(self) -> float:
        return float(self.vector[7])


@dataclass
class EnvState:
    agent: np.ndarray
    obj: np.ndarray
    goal: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    attached: bool = False
    step: int = 0
    iteration: int = 0
    success: bool = False
    seed: int = 0
    config: EnvConfig = field(default_factory=EnvConfig)

    def copy(self) -> "EnvState":
        return replace(self, agent=self.agent.copy(), obj=self.obj.copy(), goal=self.goal.copy(),
                       velocity=self.velocity.copy())

    def observe(self) -> Observation:
        t = min(self.step / self.config.max_steps, 1.0)
        contact = 1.0 if self.attached else 0.0
        return Observation(np.concatenate([self.agent, self.obj, self.goal, [contact, t]]))

    @property
    def object_to_goal(self) -> float:
        return float(np.linalg.norm(self.obj - self.goal))


def reset(seed: int, config: EnvConfig = EnvConfig()) -> Tuple[EnvState, Observation]:
    """Sample a start: agent left of the object, object left of the obstacle, goal right of it"""
    rng = np.random.default_rng(seed)
    agent = np.array([rng.uniform(-0.95, -0.75), rng.uniform(-0.2, 0.2)])
    obj = np.array([rng.uniform(-0.65, -0.45), rng.uniform(-0.1, 0.1)])
    goal = np.array([rng.uniform(0.45, 0.65), rng.uniform(-0.1, 0.1)])
    state = EnvState(agent=agent, obj=obj, goal=goal, seed=seed, config=config)
    return state, state.observe()


def project_free(position: np.ndarray, radius: float) -> np.ndarray:
    """Clamp to the workspace and push out of the obstacle disc"""
    p = np.clip(position, -1.0, 1.0)
    norm = float(np.linalg.norm(p))
    if norm >= radius:
        return p
    if norm == 0.0:
        return np.array([0.0, radius])
    return p * (radius / norm)


def substep(state: EnvState, velocity: np.ndarray) -> None:
    """Advance ``state`` in place by one dt"""
    cfg = state.config
    before = state.agent.copy()
    state.agent = project_free(state.agent + cfg.dt * velocity, cfg.obstacle_radius)
    state.velocity = np.asarray(velocity, dtype=np.float64).copy()
    if state.attached:
        state.obj = state.obj + (state.agent - before)
    elif np.linalg.norm(state.agent - state.obj) < cfg.grasp_radius:
        state.attached = True
    state.step += 1
    if state.object_to_goal < cfg.success_radius:
        state.success = True


def env_step(state: EnvState, chunk: ActionChunk) -> Tuple[EnvState, Observation]:
    """Execute every sub-step of the chunk on a copy of ``state``"""
    value = np.asarray(chunk.value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise PolicyDivergenceError(f"non-finite action chunk at iteration {state.iteration}")
    if value.ndim != 2 or value.shape[1] != 2:
        raise ShapeError(f"action chunk must be [horizon, 2], got {list(value.shape)}")
    nxt = state.copy()
    for velocity in np.clip(value, -1.0, 1.0):
        substep(nxt, velocity)
    nxt.iteration += 1
    return nxt, nxt.observe()


def state_from_observation(obs: Observation, config: EnvConfig = EnvConfig()) -> EnvState:
    """Kinematic state implied by an observation (velocity is not observed)"""
    step = int(round(obs.time * config.max_steps))
    return EnvState(agent=obs.agent.copy(), obj=obs.obj.copy(), goal=obs.goal.copy(), attached=obs.contact,
                    step=step, iteration=step // config.horizon, config=config)

"""
Expert demonstration datasets

Episodes are split into train and validation as whole episodes. On disk the
dataset is a tensor container (magic ``SAGDATv1``) with one record per pair:

    header   [n_pairs, obs_dim, horizon, action_dim, seed, n_episodes]
    blocks   "<split>/<index:06d>/obs", "<split>/<index:06d>/action"
             "meta/episode" (episode id per pair, in file order)
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Tuple, Union

import numpy as np
from tqdm import tqdm

from config import settings
from ..autodiff import read_tensor_file, write_tensor_file
from ..errors import CheckpointError, ConfigError
from .expert import expert_action
from .push_env import EnvConfig, Observation, env_step, reset

logger = logging.getLogger(__name__)

TRAIN = 0
VALIDATION = 1
SPLIT_NAMES = {TRAIN: "train", VALIDATION: "val"}


@dataclass
class Dataset:
    obs: np.ndarray       # [P, obs_dim]
    actions: np.ndarray   # [P, horizon, action_dim]
    episode: np.ndarray   # [P]
    split: np.ndarray     # [P], TRAIN or VALIDATION
    seed: int = 0
    n_episodes: int = 0

    def __len__(self) -> int:
        return int(self.obs.shape[0])

    def subset(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.obs[index], self.actions[index], self.episode[index], self.split[index],
                       self.seed, self.n_episodes)

    def train(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.split == TRAIN))

    def validation(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.split == VALIDATION))

    def pairs(self) -> Iterator[Tuple[Observation, np.ndarray]]:
        for i in range(len(self)):
            yield Observation(self.obs[i]), self.actions[i]


def generate_demos(n_episodes: int, seed: int, config: EnvConfig = EnvConfig(),
                   validation_fraction: float = settings.VALIDATION_FRACTION, progress: bool = False) -> Dataset:
    """Roll out the expert from seeded starts; each episode draws its route mode"""
    if n_episodes < 1:
        raise ConfigError(f"n_episodes must be >= 1, got {n_episodes}")
    rng = np.random.default_rng(seed)
    env_seeds = rng.integers(0, 2**31 - 1, size=n_episodes)
    modes = rng.integers(0, 2, size=n_episodes)
    n_val = int(n_episodes * validation_fraction)
    val_episodes = set(rng.permutation(n_episodes)[:n_val].tolist())

    obs_rows, action_rows, episode_ids, splits = [], [], [], []
    failures = 0
    for ep in tqdm(range(n_episodes), desc="Expert episodes", disable=not progress):
        state, obs = reset(int(env_seeds[ep]), config)
        for _ in range(config.max_iterations):
            chunk = expert_action(state, int(modes[ep]))
            obs_rows.append(obs.vector)
            action_rows.append(chunk.value)
            episode_ids.append(ep)
            splits.append(VALIDATION if ep in val_episodes else TRAIN)
            state, obs = env_step(state, chunk)
            if state.success:
                break
        else:
            failures += 1
    if failures:
        logger.warning(f"Expert failed {failures}/{n_episodes} demonstration episodes")

    dataset = Dataset(np.stack(obs_rows), np.stack(action_rows), np.array(episode_ids, dtype=np.int64),
                      np.array(splits, dtype=np.int64), seed, n_episodes)
    logger.info(f"Generated {len(dataset)} pairs from {n_episodes} episodes "
                f"({int((dataset.split == VALIDATION).sum())} validation)")
    return dataset


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    blocks = {}
    counters = {TRAIN: 0, VALIDATION: 0}
    for i in range(len(dataset)):
        split = int(dataset.split[i])
        prefix = f"{SPLIT_NAMES[split]}/{counters[split]:06d}"
        counters[split] += 1
        blocks[f"{prefix}/obs"] = dataset.obs[i]
        blocks[f"{prefix}/action"] = dataset.actions[i]
    blocks["meta/episode"] = dataset.episode.astype(np.float64)
    header = [len(dataset), dataset.obs.shape[1], dataset.actions.shape[1], dataset.actions.shape[2],
              dataset.seed, dataset.n_episodes]
    path = write_tensor_file(path, settings.DATASET_MAGIC, header, blocks)
    logger.info(f"Wrote {len(dataset)} pairs to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> Dataset:
    payload = read_tensor_file(path, settings.DATASET_MAGIC)
    if len(payload.header) != 6:
        raise CheckpointError(f"{path}: dataset header must hold 6 integers")
    n_pairs, _, _, _, seed, n_episodes = payload.header
    names = [name for name in payload.blocks if name.endswith("/obs")]
    if len(names) != n_pairs or "meta/episode" not in payload.blocks:
        raise CheckpointError(f"{path}: expected {n_pairs} records, found {len(names)}")
    obs, actions, splits = [], [], []
    for name in names:
        prefix = name[: -len("/obs")]
        obs.append(payload.blocks[name])
        actions.append(payload.blocks[f"{prefix}/action"])
        splits.append(VALIDATION if prefix.startswith(SPLIT_NAMES[VALIDATION] + "/") else TRAIN)
    episode = payload.blocks["meta/episode"].astype(np.int64)
    return Dataset(np.stack(obs), np.stack(actions), episode, np.array(splits, dtype=np.int64), seed, n_episodes)

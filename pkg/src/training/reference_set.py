"""
Reference subset D_ref drawn from the demonstration pairs
"""

import logging
from dataclasses import dataclass

import numpy as np

from config import settings
from ..env.demos import Dataset
from ..errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ReferenceDataset:
    obs: np.ndarray       # [n, obs_dim]
    actions: np.ndarray   # [n, horizon, action_dim], expert chunks
    indices: np.ndarray   # positions in the source, ascending
    seed: int = 0

    def __len__(self) -> int:
        return int(self.obs.shape[0])


def build_reference_dataset(source: Dataset, fraction: float = settings.REFERENCE_FRACTION,
                            seed: int = 0) -> ReferenceDataset:
    """Sample round(fraction * |source|) pairs without replacement, in source order"""
    n_source = len(source)
    if n_source == 0:
        raise ConfigError("cannot build a reference set from an empty dataset")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"reference fraction must lie in (0, 1], got {fraction}")
    n = max(1, int(round(fraction * n_source)))
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(n_source, size=n, replace=False))
    logger.info(f"Reference set: {n}/{n_source} pairs (fraction {fraction}, seed {seed})")
    return ReferenceDataset(source.obs[indices], source.actions[indices], indices, seed)

"""
Behavior-cloning pretraining of the diffusion policy

Each batch draws one denoising step per pair, noises the expert chunk to that
step and regresses the injected noise. Updates use AdamW with the first moment
disabled (beta1 = 0), an adaptive per-parameter step without momentum.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import settings
from ..autodiff import Graph, Tensor
from ..env.demos import Dataset
from ..errors import ConfigError, DivergenceError
from ..policy.dit import PolicyModel, predict_noise
from .losses import denoising_mse
from .optim import AdamW, ParamGroup

logger = logging.getLogger(__name__)

POLICY_METRIC_COLUMNS = ["step", "epoch", "loss", "lr"]


@dataclass(frozen=True)
class PretrainConfig:
    lr: float = settings.POLICY_LEARNING_RATE
    batch: int = settings.POLICY_BATCH_SIZE
    epochs: int = settings.POLICY_EPOCHS
    warmup_steps: int = settings.POLICY_WARMUP_STEPS
    weight_decay: float = settings.POLICY_WEIGHT_DECAY
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"policy learning rate must be >= 0, got {self.lr}")
        if self.batch < 1 or self.epochs < 1:
            raise ConfigError(f"batch and epochs must be >= 1, got {self.batch}, {self.epochs}")


@dataclass
class PretrainResult:
    model: PolicyModel
    metrics: pd.DataFrame

    @property
    def losses(self) -> np.ndarray:
        return self.metrics["loss"].to_numpy()


def pretrain_policy(dataset: Dataset, model: PolicyModel, config: PretrainConfig = PretrainConfig(),
                    metrics_path: Optional[Union[str, Path]] = None) -> PretrainResult:
    """Train ``model`` in place on every pair of ``dataset``"""
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot pretrain on an empty dataset")
    c = model.config
    if dataset.obs.shape[1] != c.obs_dim or dataset.actions.shape[1:] != (c.horizon, c.action_dim):
        raise ConfigError(
            f"dataset pairs ({dataset.obs.shape[1]}, {dataset.actions.shape[1:]}) do not fit the policy "
            f"({c.obs_dim}, {(c.horizon, c.action_dim)})"
        )

    rng = np.random.default_rng(config.seed)
    model.requires_grad_(True)
    optimizer = AdamW([ParamGroup("policy", model.parameters(), config.weight_decay)], lr=config.lr,
                      betas=(0.0, 0.999), warmup_steps=config.warmup_steps)
    rows: List[list] = []
    step = 0
    try:
        for epoch in tqdm(range(config.epochs), desc="Policy epochs", disable=not config.progress):
            order = rng.permutation(n)
            for batch_index, start in enumerate(range(0, n, config.batch)):
                idx = order[start:start + config.batch]
                a0 = dataset.actions[idx]
                ks = rng.integers(1, c.K + 1, size=len(idx))
                noise = rng.standard_normal(a0.shape)
                a_k = model.schedule.add_noise(a0, noise, ks)

                graph = Graph(name=f"pretrain-{step}")
                model.zero_grad()
                with graph.recording():
                    loss = denoising_mse(predict_noise(model, Tensor(a_k), dataset.obs[idx], ks), noise)
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceError(
                        f"policy loss is {value} at step {step} (epoch {epoch}, batch {batch_index})"
                    )
                graph.backward(loss)
                lr = optimizer.step()
                step += 1
                rows.append([step, epoch, value, lr])
                logger.debug(f"pretrain step {step}: loss {value:.6f}")
            logger.info(f"Policy epoch {epoch}: mean loss {np.mean([r[2] for r in rows if r[1] == epoch]):.5f}")
    finally:
        model.requires_grad_(False)
        model.zero_grad()

    metrics = pd.DataFrame(rows, columns=POLICY_METRIC_COLUMNS)
    if metrics_path is not None:
        metrics_path = Path(metrics_path)
        metrics_path.parent.mkdir(parents=True, exist_ok=True)
        metrics.to_csv(metrics_path, index=False, float_format="%.8f")
        logger.info(f"Wrote policy loss curve to {metrics_path}")
    return PretrainResult(model, metrics)

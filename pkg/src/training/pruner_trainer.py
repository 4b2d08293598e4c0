"""
Pruner training against a frozen policy

Per batch of reference pairs:

    1. the pruner predicts logits for every (step, block) unit; the gates fed
       to the policy are straight-through (forward hard, backward the prune
       probability)
    2. the policy denoises K -> 1 in gated form with the reuse cache active,
       so every gate reaches the final action
    3. loss_total = loss_fidelity + beta * loss_sparsity, backpropagated
       through the whole chain into the pruner parameters only

The sparsity term averages the prune probabilities by default (``soft``);
``ste`` averages the straight-through gates instead.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import settings
from ..autodiff import Graph, Tensor, ops
from ..caching import ONE_FOR_ALL, REUSE_STRATEGIES
from ..env.demos import Dataset
from ..errors import ConfigError, DivergenceError, SagError
from ..policy.dit import PolicyModel, draw_chain_noise, run_denoising_chain
from ..pruner.model import PARAM_GROUPS, PrunerModel, PrunerOutput
from .losses import GLOBAL, SPARSITY_SCOPES, fidelity_loss, sparsity_loss
from .optim import AdamW, ParamGroup, grad_norm
from .reference_set import ReferenceDataset

logger = logging.getLogger(__name__)

STE_GATE = "ste"
SOFT_GATE = "soft"
SPARSITY_GATES = (STE_GATE, SOFT_GATE)

METRIC_COLUMNS = ["step", "epoch", "loss_total", "loss_fidelity", "loss_sparsity", "realized_rate", "lr"]
VAL_METRIC_COLUMNS = ["epoch", "loss_fidelity", "loss_sparsity", "realized_rate"]

VALIDATION_PAIRS = 64


@dataclass(frozen=True)
class TrainConfig:
    rho: float = settings.TARGET_RATE
    beta: float = settings.SPARSITY_WEIGHT
    lr: float = settings.LEARNING_RATE
    batch: int = settings.BATCH_SIZE
    epochs: int = settings.EPOCHS
    warmup_steps: int = settings.WARMUP_STEPS
    weight_decay: Dict[str, float] = field(default_factory=lambda: dict(settings.WEIGHT_DECAY))
    seed: int = 0
    reuse: str = ONE_FOR_ALL
    sparsity_scope: str = GLOBAL
    sparsity_gate: str = settings.SPARSITY_GATE
    validation_pairs: int = VALIDATION_PAIRS
    progress: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.batch < 1 or self.epochs < 1 or self.warmup_steps < 0:
            raise ConfigError("batch and epochs must be >= 1 and warmup_steps >= 0")
        unknown = set(self.weight_decay) - set(PARAM_GROUPS)
        if unknown:
            raise ConfigError(f"unknown weight-decay groups {sorted(unknown)} (expected {list(PARAM_GROUPS)})")
        if self.reuse not in REUSE_STRATEGIES:
            raise ConfigError(f"unknown reuse strategy '{self.reuse}'")
        if self.sparsity_scope not in SPARSITY_SCOPES:
            raise ConfigError(f"unknown sparsity scope '{self.sparsity_scope}'")
        if self.sparsity_gate not in SPARSITY_GATES:
            raise ConfigError(f"unknown sparsity gate '{self.sparsity_gate}'")


@dataclass
class StepMetrics:
    step: int
    epoch: int
    loss_total: float
    loss_fidelity: float
    loss_sparsity: float
    realized_rate: float
    lr: float
    grad_norm: float = 0.0

    def row(self) -> list:
        return [self.step, self.epoch, self.loss_total, self.loss_fidelity, self.loss_sparsity,
                self.realized_rate, self.lr]


@dataclass
class ValidationMetrics:
    epoch: int
    loss_fidelity: float
    loss_sparsity: float
    realized_rate: float


@dataclass
class EpochMetrics:
    epoch: int
    steps: List[StepMetrics]
    validation: Optional[ValidationMetrics] = None

    @property
    def live_gradient_fraction(self) -> float:
        if not self.steps:
            return 0.0
        return float(np.mean([s.grad_norm > 0.0 for s in self.steps]))

    @property
    def mean_loss(self) -> float:
        return float(np.mean([s.loss_total for s in self.steps])) if self.steps else float("nan")


def make_pruner_optimizer(pruner: PrunerModel, config: TrainConfig) -> AdamW:
    groups = [ParamGroup(name, params, config.weight_decay.get(name, 0.0))
              for name, params in pruner.groups().items() if params]
    return AdamW(groups, lr=config.lr, warmup_steps=config.warmup_steps)


def _gate_values(output: PrunerOutput, gate: str) -> Tensor:
    return output.gates if gate == STE_GATE else output.soft


def batch_losses(pruner: PrunerModel, policy: PolicyModel, obs: np.ndarray, a_star: np.ndarray,
                 noise: np.ndarray, config: TrainConfig) -> Tuple[Tensor, Tensor, Tensor, PrunerOutput]:
    """(loss_total, loss_fidelity, loss_sparsity, pruner output) for one batch.

    Records onto the active graph if one is recording.
    """
    output = pruner.forward(obs)
    a0, _ = run_denoising_chain(policy, obs, noise, gates=output.gates, reuse=config.reuse)
    fidelity = fidelity_loss(a0, a_star)
    sparsity = sparsity_loss(_gate_values(output, config.sparsity_gate), config.rho, config.sparsity_scope)
    total = ops.add(fidelity, ops.scale(sparsity, config.beta))
    return total, fidelity, sparsity, output


def train_pruner_epoch(pruner: PrunerModel, policy: PolicyModel, ref: ReferenceDataset, config: TrainConfig,
                       epoch: int = 0, optimizer: Optional[AdamW] = None,
                       rng: Optional[np.random.Generator] = None, first_step: int = 0) -> Tuple[PrunerModel, EpochMetrics]:
    """One pass over the reference set, updating the pruner only.

    Pass the same ``optimizer`` and ``rng`` across epochs to keep the Adam
    moments, warmup position and sampling stream.
    """
    if len(ref) == 0:
        raise ConfigError("reference set is empty")
    optimizer = optimizer if optimizer is not None else make_pruner_optimizer(pruner, config)
    rng = rng if rng is not None else np.random.default_rng([config.seed, epoch])
    c = policy.config

    policy.requires_grad_(False)
    policy.zero_grad()
    pruner.requires_grad_(True)
    checksum = policy.checksum()

    steps: List[StepMetrics] = []
    order = rng.permutation(len(ref))
    for batch_index, start in enumerate(range(0, len(ref), config.batch)):
        idx = order[start:start + config.batch]
        obs, a_star = ref.obs[idx], ref.actions[idx]
        noise = draw_chain_noise(rng, c.K, (len(idx), c.horizon, c.action_dim))

        graph = Graph(name=f"pruner-epoch{epoch}-batch{batch_index}")
        pruner.zero_grad()
        with graph.recording():
            total, fidelity, sparsity, output = batch_losses(pruner, policy, obs, a_star, noise, config)
        if not np.isfinite(total.item()):
            raise DivergenceError(
                f"pruner loss is {total.item()} at batch {batch_index} (epoch {epoch})"
            )
        graph.backward(total)
        norm = grad_norm(pruner.parameters())
        lr = optimizer.step()
        pruner.mark_updated()

        metrics = StepMetrics(
            step=first_step + len(steps) + 1,
            epoch=epoch,
            loss_total=total.item(),
            loss_fidelity=fidelity.item(),
            loss_sparsity=sparsity.item(),
            realized_rate=float(output.gates.data.mean()),
            lr=lr,
            grad_norm=norm,
        )
        steps.append(metrics)
        logger.debug(f"batch {batch_index}: total {metrics.loss_total:.5f} fidelity {metrics.loss_fidelity:.5f} "
                     f"sparsity {metrics.loss_sparsity:.5f} rate {metrics.realized_rate:.3f}")

    if any(p.grad is not None for p in policy.parameters()):
        raise SagError("policy parameters received gradients during pruner training")
    if policy.checksum() != checksum:
        raise SagError(f"policy parameters changed during pruner epoch {epoch}")
    pruner.zero_grad()
    return pruner, EpochMetrics(epoch, steps)


def validate_pruner(pruner: PrunerModel, policy: PolicyModel, pairs: Union[Dataset, ReferenceDataset],
                    config: TrainConfig, epoch: int = 0) -> ValidationMetrics:
    """Held-out losses with hard masks and a fixed noise stream"""
    n = min(len(pairs), config.validation_pairs)
    if n == 0:
        raise ConfigError("validation set is empty")
    rng = np.random.default_rng([config.seed, 2])
    idx = np.sort(rng.choice(len(pairs), size=n, replace=False))
    c = policy.config
    noise = draw_chain_noise(rng, c.K, (n, c.horizon, c.action_dim))
    _, fidelity, sparsity, output = batch_losses(pruner, policy, pairs.obs[idx], pairs.actions[idx], noise, config)
    return ValidationMetrics(epoch, fidelity.item(), sparsity.item(), float(output.gates.data.mean()))


class PrunerTrainer:
    """Runs all epochs with shared optimizer state, metrics files and checkpoints"""

    def __init__(self, pruner: PrunerModel, policy: PolicyModel, ref: ReferenceDataset, config: TrainConfig,
                 validation: Optional[Union[Dataset, ReferenceDataset]] = None,
                 out_dir: Optional[Union[str, Path]] = None):
        if (pruner.config.K, pruner.config.L) != (policy.config.K, policy.config.L):
            raise ConfigError(
                f"pruner grid ({pruner.config.K}, {pruner.config.L}) does not match the policy "
                f"({policy.config.K}, {policy.config.L})"
            )
        self.pruner = pruner
        self.policy = policy
        self.ref = ref
        self.config = config
        self.validation = validation
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = make_pruner_optimizer(pruner, config)
        self.rng = np.random.default_rng(config.seed)
        self.history: List[EpochMetrics] = []

    @property
    def steps(self) -> List[StepMetrics]:
        return [s for epoch in self.history for s in epoch.steps]

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.row() for s in self.steps], columns=METRIC_COLUMNS)

    def validation_frame(self) -> pd.DataFrame:
        rows = [[v.epoch, v.loss_fidelity, v.loss_sparsity, v.realized_rate]
                for v in (e.validation for e in self.history) if v is not None]
        return pd.DataFrame(rows, columns=VAL_METRIC_COLUMNS)

    def fit(self) -> PrunerModel:
        for epoch in tqdm(range(self.config.epochs), desc="Pruner epochs", disable=not self.config.progress):
            _, metrics = train_pruner_epoch(self.pruner, self.policy, self.ref, self.config, epoch=epoch,
                                            optimizer=self.optimizer, rng=self.rng,
                                            first_step=len(self.steps))
            if self.validation is not None and len(self.validation):
                metrics.validation = validate_pruner(self.pruner, self.policy, self.validation, self.config, epoch)
            self.history.append(metrics)
            val = metrics.validation
            logger.info(
                f"Pruner epoch {epoch}: loss {metrics.mean_loss:.5f}, rate {metrics.steps[-1].realized_rate:.3f}"
                + (f", val fidelity {val.loss_fidelity:.5f}" if val is not None else "")
            )
            self._write_outputs(epoch)
        return self.pruner

    def _write_outputs(self, epoch: int) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_frame().to_csv(self.out_dir / "metrics.csv", index=False, float_format="%.8f")
        if self.validation is not None:
            self.validation_frame().to_csv(self.out_dir / "val_metrics.csv", index=False, float_format="%.8f")
        self.pruner.save(self.out_dir / "checkpoints" / f"pruner_epoch{epoch:03d}.sag")
        self.pruner.save(self.out_dir / settings.PRUNER_FILE)


def train_pruner(pruner: PrunerModel, policy: PolicyModel, ref: ReferenceDataset, config: TrainConfig,
                 validation: Optional[Union[Dataset, ReferenceDataset]] = None,
                 out_dir: Optional[Union[str, Path]] = None) -> PrunerTrainer:
    trainer = PrunerTrainer(pruner, policy, ref, config, validation, out_dir)
    trainer.fit()
    return trainer

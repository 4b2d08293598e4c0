from .losses import BLOCKWISE, GLOBAL, SPARSITY_SCOPES, denoising_mse, fidelity_loss, sparsity_loss
from .optim import AdamW, ParamGroup, grad_norm
from .pretrain import POLICY_METRIC_COLUMNS, PretrainConfig, PretrainResult, pretrain_policy
from .pruner_trainer import (
    METRIC_COLUMNS,
    SOFT_GATE,
    SPARSITY_GATES,
    STE_GATE,
    VAL_METRIC_COLUMNS,
    EpochMetrics,
    PrunerTrainer,
    StepMetrics,
    TrainConfig,
    ValidationMetrics,
    batch_losses,
    make_pruner_optimizer,
    train_pruner,
    train_pruner_epoch,
    validate_pruner,
)
from .reference_set import ReferenceDataset, build_reference_dataset

__all__ = [
    'BLOCKWISE',
    'GLOBAL',
    'METRIC_COLUMNS',
    'POLICY_METRIC_COLUMNS',
    'SOFT_GATE',
    'SPARSITY_GATES',
    'SPARSITY_SCOPES',
    'STE_GATE',
    'VAL_METRIC_COLUMNS',
    'AdamW',
    'EpochMetrics',
    'ParamGroup',
    'PretrainConfig',
    'PretrainResult',
    'PrunerTrainer',
    'ReferenceDataset',
    'StepMetrics',
    'TrainConfig',
    'ValidationMetrics',
    'batch_losses',
    'build_reference_dataset',
    'denoising_mse',
    'fidelity_loss',
    'grad_norm',
    'make_pruner_optimizer',
    'pretrain_policy',
    'sparsity_loss',
    'train_pruner',
    'train_pruner_epoch',
    'validate_pruner',
]

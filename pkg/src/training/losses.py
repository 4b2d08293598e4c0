"""
Training objectives: fidelity and sparsity for the pruner, noise regression
for the policy
"""

from typing import Union

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ConfigError, ShapeError

GLOBAL = "global"
BLOCKWISE = "blockwise"
SPARSITY_SCOPES = (GLOBAL, BLOCKWISE)


def _as_tensor(value: Union[Tensor, np.ndarray]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def fidelity_loss(pruned_action: Tensor, reference_action: Union[Tensor, np.ndarray]) -> Tensor:
    """L2 distance between chunks, averaged over the batch for [B, T, A] inputs"""
    target = _as_tensor(reference_action)
    if pruned_action.shape != target.shape:
        raise ShapeError(f"fidelity_loss: {pruned_action.shape} vs {target.shape}")
    diff = ops.sub(pruned_action, target)
    if diff.ndim == 2:
        return ops.l2_norm(diff, axis=(0, 1))
    if diff.ndim != 3:
        raise ShapeError(f"fidelity_loss expects [T, A] or [B, T, A], got {diff.shape}")
    return ops.mean(ops.l2_norm(diff, axis=(1, 2)))


def sparsity_loss(gate_values: Union[Tensor, np.ndarray], rho: float, scope: str = GLOBAL) -> Tensor:
    """|mean(gates) - rho|, or per block when ``scope`` is blockwise.

    ``gate_values`` is [K, 3L] or [B, K, 3L]; it may be soft probabilities
    or straight-through hard gates.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"target rate must lie in [0, 1], got {rho}")
    gates = _as_tensor(gate_values)
    if gates.ndim not in (2, 3):
        raise ShapeError(f"sparsity_loss expects [K, 3L] or [B, K, 3L], got {gates.shape}")
    if scope == GLOBAL:
        return ops.abs_(ops.affine(ops.mean(gates), 1.0, -rho))
    if scope == BLOCKWISE:
        per_block = ops.mean(gates, axis=tuple(range(gates.ndim - 1)))
        return ops.mean(ops.abs_(ops.affine(per_block, 1.0, -rho)))
    raise ConfigError(f"unknown sparsity scope '{scope}' (expected one of {SPARSITY_SCOPES})")


def denoising_mse(eps_pred: Tensor, eps: Union[Tensor, np.ndarray]) -> Tensor:
    target = _as_tensor(eps)
    if eps_pred.shape != target.shape:
        raise ShapeError(f"denoising_mse: {eps_pred.shape} vs {target.shape}")
    return ops.mean(ops.square(ops.sub(eps_pred, target)))

"""
Sinusoidal codes for (mask row, block) coordinates

Unit order is row-major over the mask: unit ``u = r * 3L + b`` for mask row
``r`` (execution order) and flat block index ``b``.
"""

import numpy as np

from ..autodiff import Tensor
from ..errors import ConfigError

MAX_PERIOD = 10000.0


def _frequencies(dim: int) -> np.ndarray:
    if dim <= 0 or dim % 2 != 0:
        raise ConfigError(f"sinusoidal embedding dimension must be a positive even integer, got {dim}")
    return MAX_PERIOD ** (-2.0 * np.arange(dim // 2) / dim)


def sinusoidal_table(n: int, dim: int) -> np.ndarray:
    """Rows 0..n-1 of the interleaved (sin, cos) table, shape [n, dim]"""
    angles = np.arange(n, dtype=np.float64)[:, None] * _frequencies(dim)[None, :]
    table = np.empty((n, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def sinusoidal_embed(index: int, dim: int) -> Tensor:
    if index < 0:
        raise ConfigError(f"sinusoidal embedding index must be >= 0, got {index}")
    angles = index * _frequencies(dim)
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return Tensor(out)


def coordinate_indices(K: int, L: int):
    """(row index, block index) per unit, each of length K * 3L"""
    rows = np.repeat(np.arange(K), 3 * L)
    blocks = np.tile(np.arange(3 * L), K)
    return rows, blocks


def encode_coordinates(K: int, L: int, d_pos: int) -> Tensor:
    if K < 1 or L < 1:
        raise ConfigError(f"K and L must be positive, got K={K}, L={L}")
    rows, blocks = coordinate_indices(K, L)
    step_codes = sinusoidal_table(K, d_pos)[rows]
    block_codes = sinusoidal_table(3 * L, d_pos)[blocks]
    return Tensor(np.concatenate([step_codes, block_codes], axis=1))

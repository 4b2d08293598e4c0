"""
Reuse buffers for skipped DiT blocks

A skipped block adds the content of a buffer to the residual stream instead of
its own residual; a computed block overwrites that buffer with its residual.
The strategies differ only in which blocks share a buffer:

    one_for_all  one buffer per block type (SA / CA / FFN), shared by every
                 layer and every denoising step, so a residual computed by one
                 block can stand in for a same-type block in another layer at
                 a later step (zig-zag reuse)
    single       one buffer for every block
    blockwise    one buffer per block index (temporal reuse only)
"""

import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import CacheError, ConfigError
from ..pruner.mask import BLOCK_TYPES

logger = logging.getLogger(__name__)

WRITE = "write"
REUSE = "reuse"

ONE_FOR_ALL = "one_for_all"
SINGLE = "single"
BLOCKWISE = "blockwise"
REUSE_STRATEGIES = (ONE_FOR_ALL, SINGLE, BLOCKWISE)


@dataclass(frozen=True)
class CacheEvent:
    step: int
    block: int
    block_type: str
    kind: str
    value: Optional[np.ndarray] = None


class ReuseCache:
    """Zero-initialized buffers plus an ordered write/reuse log"""

    strategy = "abstract"

    def __init__(self, shape: Sequence[int], record_values: bool = False):
        self.shape: Tuple[int, ...] = tuple(shape)
        self.record_values = record_values
        self.event_log: List[CacheEvent] = []
        self._buffers: Dict[Hashable, Tensor] = {}

    def slot(self, block_type: str, block: int) -> Hashable:
        raise NotImplementedError

    def read(self, block_type: str, block: int) -> Tensor:
        key = self.slot(block_type, block)
        if key not in self._buffers:
            self._buffers[key] = Tensor.zeros(self.shape)
        return self._buffers[key]

    def write(self, block_type: str, block: int, value: Tensor) -> None:
        self.check_shape(value)
        self._buffers[self.slot(block_type, block)] = value

    def check_shape(self, value: Tensor) -> None:
        if tuple(value.shape) != self.shape:
            raise CacheError(
                f"{self.strategy} buffer shape {list(self.shape)} does not match residual shape {value.shape}"
            )

    def log(self, step: int, block: int, kind: str, value: Optional[Tensor] = None) -> None:
        snapshot = value.data.copy() if (self.record_values and value is not None) else None
        self.event_log.append(CacheEvent(step, block, BLOCK_TYPES[block % 3], kind, snapshot))

    def apply(self, residual: Optional[Tensor], block_type: str, step: int = 0, block: int = 0) -> Tensor:
        """Compute path (residual given) writes and returns it; reuse path (None) returns the buffer"""
        if residual is None:
            value = self.read(block_type, block)
            self.log(step, block, REUSE, value)
            return value
        self.write(block_type, block, residual)
        self.log(step, block, WRITE, residual)
        return residual

    def blend(self, residual: Tensor, gate: Tensor, block_type: str, step: int = 0, block: int = 0) -> Tensor:
        """Gated form used in training: tau <- (1 - g) * d + g * tau, returned as the block output.

        ``gate`` has the residual's shape; with g in {0, 1} this equals ``apply``
        bit for bit.
        """
        tau = self.read(block_type, block)
        mixed = ops.add(ops.mul(ops.affine(gate, -1.0, 1.0), residual), ops.mul(gate, tau))
        self.write(block_type, block, mixed)
        self.log(step, block, REUSE if np.all(gate.data == 1.0) else WRITE, mixed)
        return mixed

    def buffer_values(self) -> Dict[Hashable, np.ndarray]:
        return {key: t.data.copy() for key, t in self._buffers.items()}


class CacheState(ReuseCache):
    """One-for-all reuse: a shared buffer per block type"""

    strategy = ONE_FOR_ALL

    def slot(self, block_type: str, block: int) -> Hashable:
        return block_type

    @property
    def buffers(self) -> List[Tensor]:
        return [self.read(t, 0) for t in BLOCK_TYPES]


class SingleBufferCache(ReuseCache):
    """A single buffer shared by every block"""

    strategy = SINGLE

    def slot(self, block_type: str, block: int) -> Hashable:
        return "all"


class BlockwiseCache(ReuseCache):
    """Per-block buffers: a skipped block reuses its own last residual"""

    strategy = BLOCKWISE

    def __init__(self, shape: Sequence[int], n_blocks: int, record_values: bool = False):
        super().__init__(shape, record_values)
        self.n_blocks = n_blocks

    def slot(self, block_type: str, block: int) -> Hashable:
        if not 0 <= block < self.n_blocks:
            raise CacheError(f"block index {block} outside [0, {self.n_blocks})")
        return block

    @property
    def buffers(self) -> List[Tensor]:
        return [self.read(BLOCK_TYPES[b % 3], b) for b in range(self.n_blocks)]


def make_cache(strategy: str, shape: Sequence[int], n_blocks: int, record_values: bool = False) -> ReuseCache:
    logger.debug(f"{strategy} reuse cache with buffers of shape {list(shape)}")
    if strategy == ONE_FOR_ALL:
        return CacheState(shape, record_values)
    if strategy == SINGLE:
        return SingleBufferCache(shape, record_values)
    if strategy == BLOCKWISE:
        return BlockwiseCache(shape, n_blocks, record_values)
    raise ConfigError(f"unknown reuse strategy '{strategy}' (expected one of {', '.join(REUSE_STRATEGIES)})")


def one_for_all_apply(residual: Optional[Tensor], block_type: str, cache: CacheState,
                      step: int = 0, block: Optional[int] = None) -> Tensor:
    if block is None:
        block = BLOCK_TYPES.index(block_type)
    return cache.apply(residual, block_type, step, block)


def blockwise_apply(residual: Optional[Tensor], step: int, block: int, per_block_buffers: BlockwiseCache) -> Tensor:
    return per_block_buffers.apply(residual, BLOCK_TYPES[block % 3], step, block)

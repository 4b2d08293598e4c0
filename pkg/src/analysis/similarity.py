"""
Redundancy of block residuals across denoising steps and blocks

A dense generation with value capture records every residual each block adds.
Cosine similarity between those residuals shows which computations repeat:
across steps for one block, across layers and steps for one block type (the
pattern one-for-all reuse exploits), or over all units at once.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from ..autodiff import Tensor
from ..caching import WRITE
from ..errors import AnalysisError, ShapeError
from ..policy.dit import ObsLike, PolicyModel, generate_action
from ..pruner.mask import BLOCK_TYPES, row_to_step
from .heatmaps import write_heatmap

logger = logging.getLogger(__name__)


def cosine_similarity_matrix(activations: Sequence[Union[Tensor, np.ndarray]]) -> np.ndarray:
    """M[i, j] = cos(flatten(a_i), flatten(a_j))"""
    if len(activations) < 2:
        raise AnalysisError(f"need at least 2 activations, got {len(activations)}")
    arrays = [a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64) for a in activations]
    shape = arrays[0].shape
    for i, a in enumerate(arrays):
        if a.shape != shape:
            raise ShapeError(f"activation {i} has shape {list(a.shape)}, expected {list(shape)}")
    flat = np.stack([a.reshape(-1) for a in arrays])
    norms = np.linalg.norm(flat, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise AnalysisError(f"activation {int(zero[0])} has zero norm")
    unit = flat / norms[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return (sim + sim.T) / 2.0


def adjacent_mean(matrix: np.ndarray) -> float:
    """Mean similarity of consecutive entries (first superdiagonal)"""
    return float(np.mean(np.diag(matrix, k=1)))


@dataclass
class ActivationCapture:
    """Residual of every computed unit, keyed by (row, block)"""
    K: int
    L: int
    residuals: Dict[tuple, np.ndarray] = field(default_factory=dict)

    def block_series(self, block: int) -> List[np.ndarray]:
        return [self.residuals[(row, block)] for row in range(self.K)]

    def type_series(self, block_type: str) -> List[np.ndarray]:
        t = BLOCK_TYPES.index(block_type)
        return [self.residuals[(row, 3 * layer + t)] for row in range(self.K) for layer in range(self.L)]

    def all_units(self) -> List[np.ndarray]:
        return [self.residuals[(row, b)] for row in range(self.K) for b in range(3 * self.L)]


def capture_activations(model: PolicyModel, obs: ObsLike, rng_seed: int = 0) -> ActivationCapture:
    """Dense generation with every block residual snapshotted"""
    c = model.config
    _, cache, _ = generate_action(obs, None, model, rng_seed, record_values=True)
    capture = ActivationCapture(c.K, c.L)
    for event in cache.event_log:
        if event.kind == WRITE:
            capture.residuals[(c.K - event.step, event.block)] = event.value
    return capture


@dataclass
class SimilarityReport:
    cross_step: np.ndarray    # [K, K] one block over executed steps
    cross_block: np.ndarray   # [K*L, K*L] one block type over (step, layer)
    overall: np.ndarray       # [K*3L, K*3L]
    block: int
    block_type: str

    @property
    def adjacent_step_similarity(self) -> float:
        return adjacent_mean(self.cross_step)


def similarity_report(capture: ActivationCapture, block: int) -> SimilarityReport:
    if not 0 <= block < 3 * capture.L:
        raise AnalysisError(f"block {block} outside [0, {3 * capture.L})")
    block_type = BLOCK_TYPES[block % 3]
    return SimilarityReport(
        cross_step=cosine_similarity_matrix(capture.block_series(block)),
        cross_block=cosine_similarity_matrix(capture.type_series(block_type)),
        overall=cosine_similarity_matrix(capture.all_units()),
        block=block,
        block_type=block_type,
    )


def write_similarity_report(report: SimilarityReport, capture: ActivationCapture,
                            out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    steps = [f"k{row_to_step(row, capture.K)}" for row in range(capture.K)]
    type_labels = [f"k{row_to_step(row, capture.K)}.L{layer}" for row in range(capture.K) for layer in range(capture.L)]
    unit_labels = [f"k{row_to_step(row, capture.K)}.L{b // 3}.{BLOCK_TYPES[b % 3]}"
                   for row in range(capture.K) for b in range(3 * capture.L)]
    paths: List[Path] = []
    paths += write_heatmap(report.cross_step, out_dir / f"similarity_steps_block{report.block}",
                           0.0, 1.0, steps, steps, "step")
    paths += write_heatmap(report.cross_block, out_dir / f"similarity_{report.block_type.lower()}_blocks",
                           0.0, 1.0, type_labels, type_labels, "unit")
    paths += write_heatmap(report.overall, out_dir / "similarity_overall", 0.0, 1.0, unit_labels, unit_labels, "unit")
    logger.info(f"Wrote {len(paths)} similarity files to {out_dir}")
    return paths

"""
Benchmark comparison of generation methods on the same episode suites

Success rates are aggregated per evaluation seed (mean and population std
across seeds). The FLOP factor is dense / (executed + pruner), averaged over
every rollout iteration. Wall-clock figures are kept out of ``bench.csv`` so
that file depends only on the seeds.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..caching import Schedule, learned_schedule
from ..env.push_env import EnvConfig
from ..env.rollout import PolicyFn, run_episodes, success_rate
from ..errors import AnalysisError, ConfigError
from ..policy.config import ModelConfig
from ..policy.flops import flop_count
from ..pruner.mask import PruneMask
from ..pruner.model import PrunerModel

logger = logging.getLogger(__name__)

DENSE = "dense"
PRUNED = "sag"
UNIFORM = "uniform_interval"
BLOCKWISE = "blockwise_reuse"
FROZEN = "frozen_mask"
ABLATIONS = (FROZEN, BLOCKWISE)

BENCH_COLUMNS = ["method", "success_mean", "success_std", "flop_factor", "realized_rate", "episodes", "flagged"]
TIMING_COLUMNS = ["method", "seconds_per_iteration", "speedup"]


@dataclass
class BenchmarkRow:
    method: str
    success_mean: float
    success_std: float
    flop_factor: float
    speedup: float
    realized_rate: float
    episodes: int
    seconds_per_iteration: float = 0.0
    flagged: bool = False


def frozen_mask_from_pruner(pruner: PrunerModel, observations: np.ndarray,
                            rate: Optional[float] = None) -> Schedule:
    """One fixed mask from the pruner's average decisions over ``observations``.

    The ceil(rate * N) units with the highest mean prune probability are
    skipped; ``rate`` defaults to the mean realized hard rate on the same
    observations.
    """
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise AnalysisError("frozen mask needs a non-empty [n, obs_dim] observation batch")
    output = pruner.forward(obs, coords=pruner.encoded_coordinates())
    mean_soft = output.soft.data.mean(axis=0)
    if rate is None:
        rate = float(output.gates.data.mean())
    n_units = mean_soft.size
    n_prune = min(n_units, int(math.ceil(rate * n_units - 1e-9)))
    order = np.argsort(-mean_soft.reshape(-1), kind="stable")
    hard = np.zeros(n_units, dtype=np.int8)
    hard[order[:n_prune]] = 1
    mask = PruneMask(hard.reshape(mean_soft.shape), mean_soft)
    return learned_schedule(mask, FROZEN)


def _method_row(name: str, policy: PolicyFn, config: ModelConfig, seed_suites: Mapping[int, Sequence[int]],
                max_iterations: int, env_config: EnvConfig, workers: int, progress: bool) -> BenchmarkRow:
    dense_flops = flop_count(config).dense_flops
    per_seed, factors, rates = [], [], []
    iterations = 0
    started = time.perf_counter()
    for seed in sorted(seed_suites):
        results = run_episodes(policy, seed_suites[seed], max_iterations, None, env_config, workers, progress)
        per_seed.append(success_rate(results))
        for _, trace in results:
            for record in trace.records:
                factors.append(dense_flops / (record.executed_flops + record.pruner_flops))
                rates.append(record.realized_rate)
            iterations += len(trace.records)
    elapsed = time.perf_counter() - started
    return BenchmarkRow(
        method=name,
        success_mean=float(np.mean(per_seed)),
        success_std=float(np.std(per_seed)),
        flop_factor=float(np.mean(factors)) if factors else 1.0,
        speedup=1.0,
        realized_rate=float(np.mean(rates)) if rates else 0.0,
        episodes=sum(len(s) for s in seed_suites.values()),
        seconds_per_iteration=elapsed / max(iterations, 1),
    )


def bench_compare(methods: Mapping[str, PolicyFn], config: ModelConfig, seed_suites: Mapping[int, Sequence[int]],
                  max_iterations: int, env_config: EnvConfig = EnvConfig(), workers: int = 1,
                  progress: bool = False) -> List[BenchmarkRow]:
    """One row per method; the dense method (if present) is the timing reference"""
    if not methods:
        raise AnalysisError("bench_compare needs at least one method")
    if not seed_suites:
        raise ConfigError("bench_compare needs at least one evaluation seed")
    empty = [seed for seed, suite in seed_suites.items() if len(suite) == 0]
    if empty:
        raise ConfigError(f"evaluation seed(s) {empty} have no episodes")
    rows = []
    for name, policy in methods.items():
        row = _method_row(name, policy, config, seed_suites, max_iterations, env_config, workers, progress)
        logger.info(f"{name}: success {row.success_mean:.3f} +- {row.success_std:.3f}, "
                    f"FLOP factor {row.flop_factor:.2f}")
        rows.append(row)

    reference = next((r for r in rows if r.method == DENSE), None)
    for row in rows:
        if reference is not None and row is not reference and row.seconds_per_iteration > 0:
            row.speedup = reference.seconds_per_iteration / row.seconds_per_iteration
    flag_ablations(rows)
    return rows


def flag_ablations(rows: Sequence[BenchmarkRow]) -> List[str]:
    """Mark ablation rows that beat the full method by more than one binomial sigma"""
    full = next((r for r in rows if r.method == PRUNED), None)
    if full is None:
        return []
    sigma = math.sqrt(full.success_mean * (1.0 - full.success_mean) / max(full.episodes, 1))
    flagged = []
    for row in rows:
        if row.method in ABLATIONS and row.success_mean > full.success_mean + sigma:
            row.flagged = True
            flagged.append(row.method)
            logger.warning(f"Ablation '{row.method}' ({row.success_mean:.3f}) exceeds {PRUNED} "
                           f"({full.success_mean:.3f}) by more than one sigma ({sigma:.3f})")
    return flagged


def bench_frame(rows: Sequence[BenchmarkRow]) -> pd.DataFrame:
    return pd.DataFrame([{k: v for k, v in asdict(r).items() if k in BENCH_COLUMNS} for r in rows],
                        columns=BENCH_COLUMNS).assign(flagged=lambda f: f["flagged"].astype(int))


def format_bench_table(rows: Sequence[BenchmarkRow]) -> str:
    header = f"{'method':<18} {'success':>15} {'FLOP x':>8} {'speedup':>8} {'rate':>6}"
    lines = [header, "-" * len(header)]
    for r in rows:
        mark = " *" if r.flagged else ""
        lines.append(f"{r.method:<18} {r.success_mean:>7.3f} +- {r.success_std:<5.3f} {r.flop_factor:>8.2f} "
                     f"{r.speedup:>8.2f} {r.realized_rate:>6.3f}{mark}")
    if any(r.flagged for r in rows):
        lines.append("* ablation scored above the full method by more than one binomial sigma")
    return "\n".join(lines) + "\n"


def write_bench(rows: Sequence[BenchmarkRow], out_dir: Union[str, Path]) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "bench.csv",
        "table": out_dir / "bench.txt",
        "timing": out_dir / "bench_timing.csv",
    }
    bench_frame(rows).to_csv(paths["csv"], index=False, float_format="%.6f")
    paths["table"].write_text(format_bench_table(rows), encoding="utf-8")
    pd.DataFrame([[r.method, r.seconds_per_iteration, r.speedup] for r in rows], columns=TIMING_COLUMNS).to_csv(
        paths["timing"], index=False, float_format="%.6f")
    return paths

#!/usr/bin/env python3
"""
Sparse action generation - CLI Interface
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from config.run_config import RunConfig
from src.analysis import (
    BLOCKWISE,
    DENSE,
    FROZEN,
    PRUNED,
    UNIFORM,
    DensePolicy,
    PrunedPolicy,
    SchedulePolicy,
    bench_compare,
    capture_activations,
    format_bench_table,
    frozen_mask_from_pruner,
    leave_one_out,
    rate_trace,
    similarity_report,
    sparsity_dump,
    write_bench,
    write_leave_one_out,
    write_similarity_report,
)
from src.caching import BLOCKWISE as BLOCKWISE_REUSE
from src.caching import load_schedule, random_schedule, uniform_schedule
from src.env import evaluation_seeds, generate_demos, load_dataset, reset, run_episodes, save_dataset, success_rate
from src.errors import ConfigError, SagError
from src.policy import PolicyModel, flop_count
from src.pruner import PrunerModel
from src.training import build_reference_dataset, pretrain_policy, train_pruner

logger = logging.getLogger(__name__)

METHODS = (DENSE, PRUNED, UNIFORM, BLOCKWISE, FROZEN, "random", "schedule")


def load_policy(config: RunConfig) -> PolicyModel:
    return PolicyModel.load(config.artifact("policy"))


def load_pruner(config: RunConfig) -> PrunerModel:
    return PrunerModel.load(config.artifact("pruner"))


def build_method(config: RunConfig, method: str, policy: PolicyModel) -> Callable:
    """Rollout policy for one method name"""
    c = policy.config
    if method == DENSE:
        return DensePolicy(policy, config.reuse)
    if method == PRUNED:
        return PrunedPolicy(policy, load_pruner(config), config.reuse)
    if method == BLOCKWISE:
        return PrunedPolicy(policy, load_pruner(config), BLOCKWISE_REUSE)
    if method == FROZEN:
        validation = load_dataset(config.artifact("demos")).validation()
        return SchedulePolicy(policy, frozen_mask_from_pruner(load_pruner(config), validation.obs), config.reuse)
    if method == UNIFORM:
        return SchedulePolicy(policy, uniform_schedule(c.K, c.L, config.uniform_interval), config.reuse)
    if method == "random":
        return SchedulePolicy(policy, random_schedule(c.K, c.L, config.random_rate, config.seed), config.reuse)
    if method == "schedule":
        if not config.schedule_path:
            raise ConfigError("method 'schedule' needs schedule_path")
        return SchedulePolicy(policy, load_schedule(config.schedule_path), config.reuse)
    raise ConfigError(f"unknown method '{method}' (expected one of {', '.join(METHODS)})")


def episode_seeds(config: RunConfig) -> List[int]:
    return [s for seed in config.seeds for s in evaluation_seeds(seed, config.episodes)]


def gen_demos(config: RunConfig):
    """Roll out the scripted expert and save the demonstration pairs"""
    dataset = generate_demos(config.n_demo_episodes, config.seed, config.env_config(),
                             config.validation_fraction, progress=config.progress)
    path = save_dataset(dataset, config.artifact("demos"))

    print(f"\nResults:")
    print(f"  Episodes: {config.n_demo_episodes}")
    print(f"  Training pairs: {len(dataset.train())}")
    print(f"  Validation pairs: {len(dataset.validation())}")
    print(f"  Saved to: {path}")


def train_policy(config: RunConfig):
    """Pretrain the diffusion policy on the training split"""
    dataset = load_dataset(config.artifact("demos"))
    model = PolicyModel(config.model_config(), seed=config.seed)
    print(f"Training policy ({model.num_parameters()} parameters) on {len(dataset.train())} pairs...")
    result = pretrain_policy(dataset.train(), model, config.pretrain_config(),
                             metrics_path=config.output / "policy_metrics.csv")
    path = model.save(config.artifact("policy"))

    losses = result.losses
    print(f"\nResults:")
    print(f"  Steps: {len(losses)}")
    print(f"  First-epoch loss: {result.metrics[result.metrics['epoch'] == 0]['loss'].mean():.5f}")
    print(f"  Last-epoch loss: {result.metrics[result.metrics['epoch'] == result.metrics['epoch'].max()]['loss'].mean():.5f}")
    print(f"  Saved to: {path}")


def train_pruner_command(config: RunConfig):
    """Train the pruner against the frozen policy"""
    dataset = load_dataset(config.artifact("demos"))
    policy = load_policy(config)
    ref = build_reference_dataset(dataset.train(), config.reference_fraction, config.seed)
    pruner = PrunerModel(config.pruner_config(), seed=config.seed, head_init_scale=config.pruner_init_scale)
    print(f"Training pruner ({pruner.num_parameters()} parameters) on {len(ref)} reference pairs "
          f"(target rate {config.rho})...")
    trainer = train_pruner(pruner, policy, ref, config.train_config(), validation=dataset.validation(),
                           out_dir=config.output)

    last = trainer.history[-1]
    print(f"\nResults:")
    print(f"  Steps: {len(trainer.steps)}")
    print(f"  Final training loss: {last.mean_loss:.5f}")
    print(f"  Final realized rate: {last.steps[-1].realized_rate:.3f}")
    if last.validation is not None:
        print(f"  Validation fidelity: {last.validation.loss_fidelity:.5f}")
        print(f"  Validation realized rate: {last.validation.realized_rate:.3f}")
    print(f"  Saved to: {config.artifact('pruner')}")


def rollout(config: RunConfig):
    """Evaluate one method and write per-iteration traces"""
    policy = load_policy(config)
    runner = build_method(config, config.method, policy)
    seeds = episode_seeds(config)
    results = run_episodes(runner, seeds, config.max_iterations, None, config.env_config(), config.workers,
                           config.progress)
    frames = []
    for episode, trace in results:
        frame = trace.to_frame()
        frame.insert(0, "env_seed", episode.env_seed)
        frames.append(frame)
    traces = pd.concat(frames, ignore_index=True)
    path = config.output / f"rollout_{config.method}.csv"
    traces.to_csv(path, index=False, float_format="%.6f")
    dense = flop_count(policy.config).dense_flops
    factors = [dense / (r.executed_flops + r.pruner_flops) for _, trace in results for r in trace.records]

    print(f"\nResults:")
    print(f"  Method: {config.method}")
    print(f"  Episodes: {len(results)}")
    print(f"  Success rate: {success_rate(results):.3f}")
    print(f"  Mean realized rate: {traces['realized_rate'].mean():.3f}")
    print(f"  FLOP factor: {np.mean(factors) if factors else 1.0:.2f}")
    print(f"  Traces: {path}")


def bench(config: RunConfig):
    """Compare dense, learned-mask and baseline methods on the same seeds"""
    policy = load_policy(config)
    methods = {name: build_method(config, name, policy) for name in (DENSE, PRUNED, UNIFORM, BLOCKWISE, FROZEN)}
    suites = {seed: evaluation_seeds(seed, config.episodes) for seed in config.seeds}
    rows = bench_compare(methods, policy.config, suites, config.max_iterations, config.env_config(),
                         config.workers, config.progress)
    paths = write_bench(rows, config.output)

    print(f"\nResults:")
    print(format_bench_table(rows))
    print(f"  Table: {paths['csv']}")


def similarity(config: RunConfig):
    """Cosine similarity of block residuals over one dense generation"""
    policy = load_policy(config)
    _, obs = reset(config.seed, config.env_config())
    capture = capture_activations(policy, obs, rng_seed=config.seed)
    report = similarity_report(capture, config.similarity_block)
    paths = write_similarity_report(report, capture, config.output / "similarity")

    print(f"\nResults:")
    print(f"  Block: {report.block} ({report.block_type})")
    print(f"  Adjacent-step similarity: {report.adjacent_step_similarity:.4f}")
    print(f"  Mean {report.block_type} cross-block similarity: {np.mean(report.cross_block):.4f}")
    print(f"  Files written: {len(paths)}")


def sparsity_dump_command(config: RunConfig):
    """Write the pruner's mask at every iteration of one episode"""
    runner = PrunedPolicy(load_policy(config), load_pruner(config), config.reuse)
    env_seed = evaluation_seeds(config.seed, 1)[0]
    grids = sparsity_dump(runner, env_seed, config.max_iterations, config.env_config(),
                          out_dir=config.output / "masks")
    distinct = len({g.tobytes() for g in grids})

    print(f"\nResults:")
    print(f"  Iterations: {len(grids)}")
    print(f"  Distinct masks: {distinct}")
    print(f"  Mean realized rate: {np.mean([g.mean() for g in grids]) if grids else 0.0:.3f}")


def rate_trace_command(config: RunConfig):
    """Per-iteration realized pruning rate over an episode suite"""
    runner = build_method(config, config.method, load_policy(config))
    trace = rate_trace(runner, episode_seeds(config), config.max_iterations, config.rho, config.env_config(),
                       config.workers, config.progress)
    path = trace.to_csv(config.output / "rate_trace.csv")

    print(f"\nResults:")
    print(f"  Iterations: {len(trace.frame)}")
    print(f"  Mean realized rate: {trace.mean_rate:.3f}")
    print(f"  Max deviation from {config.rho}: {trace.max_deviation:.3f}")
    print(f"  Trace: {path}")


def leave_one_out_command(config: RunConfig):
    """Random schedules substituted at one rollout iteration at a time"""
    policy = load_policy(config)
    runner = build_method(config, config.method, policy)
    c = policy.config
    schedules = [random_schedule(c.K, c.L, config.random_rate, seed) for seed in range(config.loo_schedules)]
    iterations = config.loo_iterations or tuple(range(config.max_iterations))
    grid = leave_one_out(runner, schedules, iterations, episode_seeds(config), config.max_iterations,
                         config.env_config(), config.workers, config.progress)
    write_leave_one_out(grid, config.output)

    print(f"\nResults:")
    print(f"  Baseline success: {grid.baseline:.3f}")
    for name, row in zip(grid.schedules, grid.success):
        print(f"  {name}: " + " ".join(f"{v:.2f}" for v in row))
    print(f"  Best schedule per iteration: {', '.join(grid.best_schedule_per_iteration())}")
    if grid.single_schedule_dominates():
        print("  Note: one schedule is best at every iteration")


COMMANDS: Dict[str, Callable[[RunConfig], None]] = {
    'gen-demos': gen_demos,
    'train-policy': train_policy,
    'train-pruner': train_pruner_command,
    'rollout': rollout,
    'bench': bench,
    'similarity': similarity,
    'sparsity-dump': sparsity_dump_command,
    'rate-trace': rate_trace_command,
    'leave-one-out': leave_one_out_command,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Run configuration file (key = value lines)')
    common.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one configuration key (repeatable)')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--seed', type=int, help='Run seed')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    parser = argparse.ArgumentParser(description='Sparse action generation for diffusion policies')
    subparsers = parser.add_subparsers(dest='command', help='Available commands')
    for name, handler in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=handler.__doc__)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config, args.set)
    if args.out:
        config = config.apply({'out_dir': args.out})
    if args.seed is not None:
        config = config.apply({'seed': str(args.seed)})
    return config


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        config = resolve_config(args)
        config.write_resolved()
        COMMANDS[args.command](config)
    except (SagError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == '__main__':
    main()

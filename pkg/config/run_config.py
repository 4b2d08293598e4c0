"""
Run configuration: flat ``key = value`` text with ``#`` comments

Values are coerced to the declared field types. Unknown keys are an error.
``--set key=value`` overrides are applied after the file, and every run writes
the resolved configuration back in the same format.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from config import settings
from src.env.push_env import EnvConfig
from src.errors import ConfigError
from src.policy.config import ModelConfig
from src.pruner.config import PrunerConfig
from src.training.pretrain import PretrainConfig
from src.training.pruner_trainer import TrainConfig

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


@dataclass
class RunConfig:
    out_dir: str = str(settings.OUTPUT_DIR)
    seed: int = 0
    progress: bool = False

    # Policy
    K: int = settings.DEFAULT_K
    L: int = settings.DEFAULT_L
    d_model: int = settings.DEFAULT_D_MODEL
    n_heads: int = settings.DEFAULT_N_HEADS
    horizon: int = settings.HORIZON
    reuse: str = settings.REUSE_STRATEGY

    # Demonstrations
    n_demo_episodes: int = settings.N_DEMO_EPISODES
    validation_fraction: float = settings.VALIDATION_FRACTION

    # Policy pretraining
    policy_lr: float = settings.POLICY_LEARNING_RATE
    policy_batch: int = settings.POLICY_BATCH_SIZE
    policy_epochs: int = settings.POLICY_EPOCHS
    policy_warmup_steps: int = settings.POLICY_WARMUP_STEPS
    policy_weight_decay: float = settings.POLICY_WEIGHT_DECAY

    # Pruner
    coordinate_encoding: str = settings.COORDINATE_ENCODING
    rho: float = settings.TARGET_RATE
    beta: float = settings.SPARSITY_WEIGHT
    lr: float = settings.LEARNING_RATE
    batch: int = settings.BATCH_SIZE
    epochs: int = settings.EPOCHS
    warmup_steps: int = settings.WARMUP_STEPS
    wd_obs_encoder: float = settings.WEIGHT_DECAY['obs_encoder']
    wd_coord_encoder: float = settings.WEIGHT_DECAY['coord_encoder']
    wd_head: float = settings.WEIGHT_DECAY['head']
    reference_fraction: float = settings.REFERENCE_FRACTION
    sparsity_scope: str = settings.SPARSITY_SCOPE
    sparsity_gate: str = settings.SPARSITY_GATE
    pruner_init_scale: float = settings.PRUNER_HEAD_INIT_SCALE

    # Evaluation
    method: str = "sag"
    schedule_path: str = ""
    uniform_interval: int = settings.UNIFORM_INTERVAL
    random_rate: float = settings.RANDOM_SCHEDULE_RATE
    episodes: int = settings.EVAL_EPISODES
    seeds: Tuple[int, ...] = settings.DEFAULT_SEEDS
    workers: int = settings.EVAL_WORKERS
    max_iterations: int = settings.MAX_ITERATIONS
    similarity_block: int = 4
    loo_schedules: int = 3
    loo_iterations: Tuple[int, ...] = ()

    # Artifacts (empty = inside out_dir)
    demos_path: str = ""
    policy_path: str = ""
    pruner_path: str = ""

    # Parsing

    @classmethod
    def field_types(cls) -> Dict[str, type]:
        return {f.name: f.type for f in dataclasses.fields(cls)}

    @classmethod
    def coerce(cls, key: str, raw: str):
        types = cls.field_types()
        if key not in types:
            raise ConfigError(f"unknown config key '{key}'")
        kind = types[key]
        raw = raw.strip()
        try:
            if kind is bool:
                if raw.lower() in TRUE_WORDS:
                    return True
                if raw.lower() in FALSE_WORDS:
                    return False
                raise ValueError(raw)
            if kind is int:
                return int(raw)
            if kind is float:
                return float(raw)
            if kind is str:
                return raw
            # Tuple[int, ...]
            return tuple(int(v) for v in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"config key '{key}': cannot read '{raw}' as {getattr(kind, '__name__', kind)}")

    @staticmethod
    def parse_lines(lines: Iterable[str], source: str = "<text>") -> Dict[str, str]:
        values: Dict[str, str] = {}
        for number, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{number}: expected 'key = value', got '{line}'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return values

    def apply(self, values: Dict[str, str]) -> "RunConfig":
        return dataclasses.replace(self, **{k: self.coerce(k, v) for k, v in values.items()})

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "RunConfig":
        return cls().apply(cls.parse_lines(text.splitlines(), source))

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Optional[List[str]] = None) -> "RunConfig":
        config = cls()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            config = cls.from_text(path.read_text(encoding="utf-8"), str(path))
        return config.with_overrides(overrides or [])

    def with_overrides(self, overrides: List[str]) -> "RunConfig":
        values = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got '{item}'")
            key, value = item.split("=", 1)
            values[key.strip()] = value
        return self.apply(values)

    # Output

    def to_text(self) -> str:
        lines = []
        for name in self.field_types():
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir: Optional[Union[str, Path]] = None) -> Path:
        out_dir = Path(out_dir if out_dir is not None else self.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / settings.RESOLVED_CONFIG_FILE
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    # Component configs

    @property
    def output(self) -> Path:
        return Path(self.out_dir)

    def artifact(self, name: str) -> Path:
        explicit = {"demos": self.demos_path, "policy": self.policy_path, "pruner": self.pruner_path}[name]
        default = {"demos": settings.DEMOS_FILE, "policy": settings.POLICY_FILE, "pruner": settings.PRUNER_FILE}[name]
        return Path(explicit) if explicit else self.output / default

    def model_config(self) -> ModelConfig:
        return ModelConfig(K=self.K, L=self.L, d_model=self.d_model, n_heads=self.n_heads, horizon=self.horizon,
                           action_dim=settings.ACTION_DIM, obs_dim=settings.OBS_DIM)

    def pruner_config(self) -> PrunerConfig:
        return PrunerConfig(K=self.K, L=self.L, obs_dim=settings.OBS_DIM,
                            coordinate_encoding=self.coordinate_encoding)

    def env_config(self) -> EnvConfig:
        return EnvConfig(horizon=self.horizon, max_iterations=self.max_iterations)

    def pretrain_config(self) -> PretrainConfig:
        return PretrainConfig(lr=self.policy_lr, batch=self.policy_batch, epochs=self.policy_epochs,
                              warmup_steps=self.policy_warmup_steps, weight_decay=self.policy_weight_decay,
                              seed=self.seed, progress=self.progress)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            rho=self.rho, beta=self.beta, lr=self.lr, batch=self.batch, epochs=self.epochs,
            warmup_steps=self.warmup_steps,
            weight_decay={'obs_encoder': self.wd_obs_encoder, 'coord_encoder': self.wd_coord_encoder,
                          'head': self.wd_head},
            seed=self.seed, reuse=self.reuse, sparsity_scope=self.sparsity_scope,
            sparsity_gate=self.sparsity_gate, progress=self.progress,
        )
